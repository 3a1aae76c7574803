"""Shared fixtures: data paths and the hand-specified extraction pairings."""

from __future__ import annotations

from pathlib import Path

import pytest

DATA_DIR = Path(__file__).resolve().parent / "data"
README_DIR = DATA_DIR / "readmes"
E2E_CORPUS = DATA_DIR / "e2e" / "corpus.jsonl"
E2E_MOCK_FIXTURE = DATA_DIR / "e2e" / "mock_fixture.json"

# Hand-specified pairing for every fixture README: each entry is
# (block_index, language_hint, code, description). The expectations were
# written before the parser ran, by walking each file's block list by hand.
EXPECTED_EXTRACTIONS: dict[str, list[tuple[int, str | None, str, str | None]]] = {
    "single_pair.md": [
        (
            0,
            "js",
            "PIXI.loader.add('audio.mp3').load(done);",
            "Loading and using Audio. To load audio files, you need to use the "
            "resource-loader built into PIXI.",
        ),
    ],
    "heading_and_paragraphs.md": [
        (0, "js", "first();", "Paragraph A."),
        (1, "js", "second();", "Paragraph B.\n\nParagraph C."),
    ],
    "empty.md": [],
    "no_description.md": [
        (0, "sh", "npm install thing", None),
    ],
    "consecutive_fences.md": [
        (0, "sh", "make build", "Run the build."),
        (1, "sh", "make test", None),
    ],
    "unterminated.md": [
        (0, "js", "openEnded(1);\nopenEnded(2);\n", "Final example."),
    ],
    "indented_block.md": [
        (0, "py", "fenced()", "Use the fenced variant instead."),
    ],
    "html_block.md": [
        (0, "rb", "puts :ok", "This paragraph describes the fence."),
    ],
    "tilde_fences.md": [
        (0, "python", 'print("hi")', "Tilde fences work too."),
    ],
    "horizontal_rule.md": [
        (0, "c", "main();", "Kept below the rule."),
    ],
    "nested_fence.md": [
        (0, "md", "```js\ninner();\n```", "How to write a fenced block in markdown."),
    ],
    "crlf_setext.md": [
        (0, "js", "run();", "Intro paragraph for the demo."),
    ],
}


@pytest.fixture
def readme_dir() -> Path:
    return README_DIR


@pytest.fixture
def e2e_corpus_path() -> Path:
    return E2E_CORPUS


@pytest.fixture
def e2e_mock_fixture_path() -> Path:
    return E2E_MOCK_FIXTURE

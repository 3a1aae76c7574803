from __future__ import annotations

import json
from pathlib import Path

from snipdoc.cli import main
from snipdoc.corpus import load_corpus
from snipdoc.taxonomy import Category, DescriptionLabel, Subtype, label_to_obj

from conftest import E2E_CORPUS, E2E_MOCK_FIXTURE


def _mock_arg() -> str:
    return f"mock:{E2E_MOCK_FIXTURE}"


def _write_labels(path: Path, labels) -> None:
    path.write_text(
        "".join(json.dumps(label_to_obj(l)) + "\n" for l in labels), encoding="utf-8"
    )


# --- extract ------------------------------------------------------------------


def _fixture_tree(root: Path) -> None:
    (root / "pkg-a").mkdir(parents=True)
    (root / "pkg-b").mkdir()
    (root / "pkg-c").mkdir()
    (root / "pkg-a" / "README.md").write_text(
        "Intro A.\n\n```js\na1();\n```\n\nMore A.\n\n```js\na2();\n```\n", encoding="utf-8"
    )
    (root / "pkg-b" / "readme.markdown").write_text(
        "Intro B.\n\n```py\nb1()\n```\n\n```py\nb2()\n```\n", encoding="utf-8"
    )
    (root / "pkg-c" / "README.md").write_text(
        "Only one here.\n\n```sh\nc1\n```\n", encoding="utf-8"
    )


def test_extract_three_readmes_five_fences(tmp_path, capsys):
    _fixture_tree(tmp_path / "tree")
    out = tmp_path / "corpus.jsonl"
    rc = main(["extract", str(tmp_path / "tree"), "-o", str(out)])
    assert rc == 0
    records = load_corpus(out)
    assert len(records) == 5
    assert {r.package_name for r in records} == {"pkg-a", "pkg-b", "pkg-c"}
    assert "extracted 5 snippet record(s) from 3 README file(s)" in capsys.readouterr().out


def test_extract_empty_dir_exits_one(tmp_path):
    (tmp_path / "empty").mkdir()
    rc = main(["extract", str(tmp_path / "empty"), "-o", str(tmp_path / "out.jsonl")])
    assert rc == 1
    assert load_corpus(tmp_path / "out.jsonl") == []


def test_extract_unreadable_input_exits_two(tmp_path):
    rc = main(["extract", str(tmp_path / "missing"), "-o", str(tmp_path / "out.jsonl")])
    assert rc == 2


def test_extract_tolerates_a_byte_order_mark(tmp_path):
    (tmp_path / "tree" / "pkg-bom").mkdir(parents=True)
    (tmp_path / "tree" / "pkg-bom" / "README.md").write_bytes(
        "﻿# Title\n\nBOM description.\n\n```js\nbom();\n```\n".encode("utf-8")
    )
    out = tmp_path / "corpus.jsonl"
    assert main(["extract", str(tmp_path / "tree"), "-o", str(out)]) == 0
    records = load_corpus(out)
    assert len(records) == 1
    assert records[0].description == "BOM description."


def test_extract_isolates_non_utf8_file(tmp_path, capsys):
    _fixture_tree(tmp_path / "tree")
    (tmp_path / "tree" / "pkg-d").mkdir()
    (tmp_path / "tree" / "pkg-d" / "README.md").write_bytes(b"\xff\xfe broken \xff")
    out = tmp_path / "corpus.jsonl"
    rc = main(["extract", str(tmp_path / "tree"), "-o", str(out)])
    assert rc == 0
    assert len(load_corpus(out)) == 5
    err = capsys.readouterr().err
    assert "pkg-d/README.md" in err and "skipped" in err


# --- sample --------------------------------------------------------------------


def test_sample_same_seed_is_byte_identical(tmp_path):
    out1, out2 = tmp_path / "s1.jsonl", tmp_path / "s2.jsonl"
    for out in (out1, out2):
        rc = main(
            ["sample", "--corpus", str(E2E_CORPUS), "--out", str(out), "--n", "7", "--seed", "7"]
        )
        assert rc == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert len(load_corpus(out1)) == 7


def test_sample_different_seed_differs(tmp_path):
    out1, out2 = tmp_path / "s1.jsonl", tmp_path / "s2.jsonl"
    main(["sample", "--corpus", str(E2E_CORPUS), "--out", str(out1), "--n", "7", "--seed", "1"])
    main(["sample", "--corpus", str(E2E_CORPUS), "--out", str(out2), "--n", "7", "--seed", "2"])
    assert out1.read_bytes() != out2.read_bytes()


def test_sample_confidence_mode_uses_the_formula(tmp_path):
    out = tmp_path / "s.jsonl"
    rc = main(
        [
            "sample", "--corpus", str(E2E_CORPUS), "--out", str(out),
            "--confidence", "0.95", "--margin", "0.05", "--seed", "3",
        ]
    )
    assert rc == 0
    # sample_size(20, 0.95, 0.05) == 20 for a corpus this small
    assert len(load_corpus(out)) == 20


def test_sample_n_exceeding_corpus_exits_two(tmp_path):
    rc = main(
        ["sample", "--corpus", str(E2E_CORPUS), "--out", str(tmp_path / "s.jsonl"),
         "--n", "9999", "--seed", "0"]
    )
    assert rc == 2


def test_sample_requires_some_size_argument(tmp_path):
    rc = main(["sample", "--corpus", str(E2E_CORPUS), "--out", str(tmp_path / "s.jsonl")])
    assert rc == 2


# --- classify -------------------------------------------------------------------


def test_classify_with_mock_writes_labels_and_report(tmp_path, capsys):
    out_dir = tmp_path / "classify"
    rc = main(
        ["classify", "--corpus", str(E2E_CORPUS), "--out-dir", str(out_dir),
         "--backend", _mock_arg()]
    )
    assert rc == 0
    labels = [json.loads(l) for l in (out_dir / "labels.jsonl").read_text().splitlines()]
    assert len(labels) == 18
    report = (out_dir / "report.md").read_text()
    assert "| a. Instruction | 5 |" in report
    assert (out_dir / "report.csv").exists() and (out_dir / "report.json").exists()
    metadata = json.loads((out_dir / "run_metadata.json").read_text())
    assert metadata["command"] == "classify"
    assert metadata["resolved_config"]["backend"].startswith("mock:")
    out = capsys.readouterr().out
    assert "labels: 18, refusals: 1, violations: 1" in out


def test_classify_is_deterministic_across_fresh_runs(tmp_path):
    dirs = [tmp_path / "run1", tmp_path / "run2"]
    for d in dirs:
        rc = main(
            ["classify", "--corpus", str(E2E_CORPUS), "--out-dir", str(d),
             "--backend", _mock_arg()]
        )
        assert rc == 0
    for name in ("labels.jsonl", "classify_checkpoint.jsonl", "report.md", "report.csv", "report.json"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name


def test_concurrency_does_not_change_the_output_bytes(tmp_path):
    outs = {}
    for level in ("1", "4"):
        out_dir = tmp_path / f"conc-{level}"
        rc = main(
            ["classify", "--corpus", str(E2E_CORPUS), "--out-dir", str(out_dir),
             "--backend", _mock_arg(), "--concurrency", level]
        )
        assert rc == 0
        outs[level] = (
            (out_dir / "labels.jsonl").read_bytes(),
            (out_dir / "classify_checkpoint.jsonl").read_bytes(),
            (out_dir / "report.md").read_bytes(),
        )
    assert outs["1"] == outs["4"]


def test_classify_merge_refusals_counts_them_as_unclear(tmp_path):
    out_dir = tmp_path / "merged"
    rc = main(
        ["classify", "--corpus", str(E2E_CORPUS), "--out-dir", str(out_dir),
         "--backend", _mock_arg(), "--merge-refusals"]
    )
    assert rc == 0
    report = (out_dir / "report.md").read_text()
    assert "| c. Unclear | 2 |" in report  # 1 labelled Unclear + 1 merged refusal


def test_classify_fail_on_unclear(tmp_path):
    out_dir = tmp_path / "strict"
    rc = main(
        ["classify", "--corpus", str(E2E_CORPUS), "--out-dir", str(out_dir),
         "--backend", _mock_arg(), "--fail-on-unclear"]
    )
    assert rc == 1  # the corpus contains one Unclear description


def test_report_merge_refusals_from_checkpoint(tmp_path):
    out_dir = tmp_path / "classify"
    main(["classify", "--corpus", str(E2E_CORPUS), "--out-dir", str(out_dir),
          "--backend", _mock_arg()])
    rc = main(
        ["report", "--labels", str(out_dir / "labels.jsonl"),
         "--checkpoint", str(out_dir / "classify_checkpoint.jsonl"),
         "--merge-refusals", "--out-dir", str(tmp_path / "merged")]
    )
    assert rc == 0
    assert "| c. Unclear | 2 |" in (tmp_path / "merged" / "report.md").read_text()


def test_env_var_supplies_endpoint(tmp_path, monkeypatch):
    monkeypatch.setenv("SNIPDOC_ENDPOINT", "http://example.invalid:1")
    out_dir = tmp_path / "endpoint"
    main(["classify", "--corpus", str(E2E_CORPUS), "--out-dir", str(out_dir),
          "--backend", _mock_arg()])
    metadata = json.loads((out_dir / "run_metadata.json").read_text())
    assert metadata["resolved_config"]["endpoint"] == "http://example.invalid:1"


def test_env_var_supplies_model_name(tmp_path, monkeypatch):
    monkeypatch.setenv("SNIPDOC_MODEL", "env-model")
    out_dir = tmp_path / "env"
    main(
        ["classify", "--corpus", str(E2E_CORPUS), "--out-dir", str(out_dir),
         "--backend", _mock_arg()]
    )
    metadata = json.loads((out_dir / "run_metadata.json").read_text())
    assert metadata["model_name"] == "env-model"


def test_flag_beats_env_and_file(tmp_path, monkeypatch):
    monkeypatch.setenv("SNIPDOC_MODEL", "env-model")
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"model": "file-model"}))
    out_dir = tmp_path / "flag"
    main(
        ["classify", "--corpus", str(E2E_CORPUS), "--out-dir", str(out_dir),
         "--backend", _mock_arg(), "--model", "flag-model", "--config", str(config)]
    )
    metadata = json.loads((out_dir / "run_metadata.json").read_text())
    assert metadata["model_name"] == "flag-model"


# --- score ----------------------------------------------------------------------


def test_score_writes_scores_and_resumes(tmp_path, capsys):
    out_dir = tmp_path / "score"
    rc = main(
        ["score", "--corpus", str(E2E_CORPUS), "--out-dir", str(out_dir),
         "--backend", _mock_arg()]
    )
    assert rc == 0
    full = (out_dir / "score_checkpoint.jsonl").read_bytes()
    scores = (out_dir / "scores.csv").read_text().splitlines()
    assert scores[0] == "snippet_id,precision,recall,f1,divergent"
    assert len(scores) == 21

    # drop 10 outcomes and resume: only those are re-processed, bytes converge
    lines = full.decode().splitlines()
    (out_dir / "score_checkpoint.jsonl").write_text("\n".join(lines[:10]) + "\n")
    rc = main(
        ["score", "--corpus", str(E2E_CORPUS), "--out-dir", str(out_dir),
         "--backend", _mock_arg()]
    )
    assert rc == 0
    assert (out_dir / "score_checkpoint.jsonl").read_bytes() == full


def test_score_determinism_across_fresh_runs(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        rc = main(
            ["score", "--corpus", str(E2E_CORPUS), "--out-dir", str(d),
             "--backend", _mock_arg()]
        )
        assert rc == 0
    for name in ("scores.csv", "score_checkpoint.jsonl", "report.md"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name


# --- generate ---------------------------------------------------------------------


def test_generate_suggests_only_for_missing_descriptions(tmp_path):
    corpus_path = tmp_path / "corpus.jsonl"
    rows = [
        {"package_name": "p", "snippet_id": "with-desc", "code": "npm install demo-one",
         "description": "Install the package with npm before anything else.",
         "source_path": "a/README.md", "block_index": 0},
        {"package_name": "p", "snippet_id": "without-desc", "code": "parse(source);",
         "source_path": "b/README.md", "block_index": 0},
    ]
    corpus_path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    out = tmp_path / "suggestions.jsonl"
    rc = main(
        ["generate", "--corpus", str(corpus_path), "--out", str(out),
         "--backend", _mock_arg()]
    )
    assert rc == 0
    suggestions = [json.loads(l) for l in out.read_text().splitlines()]
    assert [s["snippet_id"] for s in suggestions] == ["without-desc"]
    assert suggestions[0]["suggested_description"] == "Parses the input into an AST."


# --- report ----------------------------------------------------------------------


def test_report_prints_markdown_and_fail_on_unclear(tmp_path, capsys):
    labels_path = tmp_path / "labels.jsonl"
    _write_labels(
        labels_path,
        [
            DescriptionLabel("a", Category.EXAMPLE, Subtype.CODE_EXAMPLE),
            DescriptionLabel("b", Category.UNCLEAR),
        ],
    )
    rc = main(["report", "--labels", str(labels_path)])
    assert rc == 0
    assert "| c. Unclear | 1 | 50.00% |" in capsys.readouterr().out

    rc = main(["report", "--labels", str(labels_path), "--fail-on-unclear"])
    assert rc == 1


def test_report_formats_and_out_dir(tmp_path):
    labels_path = tmp_path / "labels.jsonl"
    _write_labels(labels_path, [DescriptionLabel("a", Category.EXAMPLE, Subtype.USAGE_EXAMPLE)])
    out_dir = tmp_path / "reports"
    rc = main(["report", "--labels", str(labels_path), "--out-dir", str(out_dir)])
    assert rc == 0
    assert (out_dir / "report.md").exists()
    assert (out_dir / "report.csv").exists()
    assert json.loads((out_dir / "report.json").read_text())["distribution"]["total"] == 1


# --- agree -----------------------------------------------------------------------


def test_agree_prints_both_kappas(tmp_path, capsys):
    ids = [f"s{i}" for i in range(6)]
    cats_a = [Category.INSTRUCTION, Category.INSTRUCTION, Category.EXAMPLE,
              Category.EXAMPLE, Category.UNCLEAR, Category.EXAMPLE]
    cats_b = [Category.INSTRUCTION, Category.EXAMPLE, Category.EXAMPLE,
              Category.EXAMPLE, Category.UNCLEAR, Category.EXAMPLE]

    def label(sid, cat):
        sub = {Category.INSTRUCTION: Subtype.USAGE_INSTRUCTION,
               Category.EXAMPLE: Subtype.CODE_EXAMPLE}.get(cat)
        return DescriptionLabel(sid, cat, sub)

    path_a, path_b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    _write_labels(path_a, [label(i, c) for i, c in zip(ids, cats_a)])
    _write_labels(path_b, [label(i, c) for i, c in zip(ids, cats_b)])
    rc = main(["agree", "--labels-a", str(path_a), "--labels-b", str(path_b)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "observed agreement: 0.8333" in out
    assert "Cohen's kappa: 0.7143" in out
    assert "free-marginal kappa: 0.7500" in out


def test_agree_rejects_mismatched_id_sets(tmp_path):
    path_a, path_b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    _write_labels(path_a, [DescriptionLabel("x", Category.UNCLEAR)])
    _write_labels(path_b, [DescriptionLabel("y", Category.UNCLEAR)])
    rc = main(["agree", "--labels-a", str(path_a), "--labels-b", str(path_b)])
    assert rc == 2


def test_agree_subtype_level(tmp_path, capsys):
    labels = [
        DescriptionLabel("s1", Category.EXAMPLE, Subtype.CODE_EXAMPLE),
        DescriptionLabel("s2", Category.INSTRUCTION, Subtype.USAGE_INSTRUCTION),
        DescriptionLabel("s3", Category.UNCLEAR),
    ]
    path_a, path_b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    _write_labels(path_a, labels)
    _write_labels(path_b, labels)
    rc = main(["agree", "--labels-a", str(path_a), "--labels-b", str(path_b),
               "--level", "subtype"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "6 categories" in out
    assert "Cohen's kappa: 1.0000" in out


# --- input hygiene ------------------------------------------------------------------


def test_commands_do_not_mutate_their_inputs(tmp_path):
    before = E2E_CORPUS.read_bytes()
    main(["classify", "--corpus", str(E2E_CORPUS), "--out-dir", str(tmp_path / "o"),
          "--backend", _mock_arg()])
    assert E2E_CORPUS.read_bytes() == before
    assert E2E_MOCK_FIXTURE.read_bytes() == E2E_MOCK_FIXTURE.read_bytes()


def test_missing_corpus_file_exits_two(tmp_path):
    rc = main(["classify", "--corpus", str(tmp_path / "nope.jsonl"),
               "--out-dir", str(tmp_path / "o"), "--backend", _mock_arg()])
    assert rc == 2

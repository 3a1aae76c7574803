"""Prompt rendering for classification and generation requests.

The classification system text is a frozen plain-text asset; rendering
must reproduce it byte for byte (a checksum test guards against edits).
The generation prompt reuses the rules that transfer (one line, no
comments, no format changes) and sends the code alone, never the
original description.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

from .corpus import SnippetRecord
from .errors import MissingDescriptionError, TruncationRefusedError

#: Prompts longer than this many characters are rejected, never truncated.
DEFAULT_CHAR_BUDGET = 32_768


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self) -> None:
        if self.temperature < 0.0:
            raise ValueError("temperature must be non-negative")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class PromptBundle:
    """A fully rendered request: system text, user text, decode settings."""

    system_text: str
    user_text: str
    decode_params: DecodeParams = field(default_factory=DecodeParams)


def _asset(name: str) -> str:
    return resources.files("snipdoc.assets").joinpath(name).read_text(encoding="utf-8")


def classification_system_text() -> str:
    """The frozen classification template, verbatim from the asset file."""
    return _asset("classification_system.txt")


def generation_system_text() -> str:
    return _asset("generation_system.txt")


def _check_budget(bundle: PromptBundle, max_chars: int) -> PromptBundle:
    total = len(bundle.system_text) + len(bundle.user_text)
    if total > max_chars:
        raise TruncationRefusedError(
            f"prompt is {total} chars, budget is {max_chars}; refusing to truncate"
        )
    return bundle


def build_classification_prompt(
    record: SnippetRecord,
    decode: DecodeParams | None = None,
    *,
    max_chars: int = DEFAULT_CHAR_BUDGET,
) -> PromptBundle:
    """Render the classification request for one snippet.

    The user text carries the description and the code, delimited by the
    DESCRIPTION:/CODE: labels; the code appears exactly once, unmodified.
    """
    if not record.description or not record.description.strip():
        raise MissingDescriptionError(
            f"snippet {record.snippet_id} has no description to classify"
        )
    user_text = f"DESCRIPTION:\n{record.description}\n\nCODE:\n{record.code}"
    return _check_budget(
        PromptBundle(
            system_text=classification_system_text(),
            user_text=user_text,
            decode_params=decode or DecodeParams(),
        ),
        max_chars,
    )


def build_generation_prompt(
    record: SnippetRecord,
    decode: DecodeParams | None = None,
    *,
    max_chars: int = DEFAULT_CHAR_BUDGET,
) -> PromptBundle:
    """Render the description-generation request: the code alone.

    The original description, even when present, never reaches the model.
    """
    return _check_budget(
        PromptBundle(
            system_text=generation_system_text(),
            user_text=record.code,
            decode_params=decode or DecodeParams(),
        ),
        max_chars,
    )

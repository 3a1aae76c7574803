"""Description-category taxonomy and the strict model-answer parser.

The taxonomy is a fixed two-level space: three top-level categories
(Instruction, Example, Unclear) and five subtypes, each belonging to
exactly one non-Unclear category. Model answers are expected in the
rigid ``Type:`` / ``Option:`` / ``Example:`` line format; everything the
parser cannot accept is reported as a value (:class:`FormatViolation`
or :class:`Refusal`), never an exception, so batch runs can continue.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass

logger = logging.getLogger(__name__)


class Category(enum.Enum):
    """Top-level description intent."""

    INSTRUCTION = "Instruction"
    EXAMPLE = "Example"
    UNCLEAR = "Unclear"


class Subtype(enum.Enum):
    """Second-level description intent; Unclear has no subtypes."""

    INSTALLATION_INSTRUCTION = "Installation instruction"
    USAGE_INSTRUCTION = "Usage instruction"
    USAGE_EXAMPLE = "Usage example"
    FEATURE_EXPLANATION = "Feature explanation"
    CODE_EXAMPLE = "Code example"


class LabelSource(enum.Enum):
    HUMAN = "Human"
    MODEL = "Model"


_SUBTYPE_TO_CATEGORY: dict[Subtype, Category] = {
    Subtype.INSTALLATION_INSTRUCTION: Category.INSTRUCTION,
    Subtype.USAGE_INSTRUCTION: Category.INSTRUCTION,
    Subtype.USAGE_EXAMPLE: Category.EXAMPLE,
    Subtype.FEATURE_EXPLANATION: Category.EXAMPLE,
    Subtype.CODE_EXAMPLE: Category.EXAMPLE,
}

#: Subtypes listed per category, in report order.
SUBTYPES_BY_CATEGORY: dict[Category, tuple[Subtype, ...]] = {
    Category.INSTRUCTION: (Subtype.INSTALLATION_INSTRUCTION, Subtype.USAGE_INSTRUCTION),
    Category.EXAMPLE: (Subtype.USAGE_EXAMPLE, Subtype.FEATURE_EXPLANATION, Subtype.CODE_EXAMPLE),
    Category.UNCLEAR: (),
}

#: The sanctioned fallback answer a model may give instead of a label.
REFUSAL_SENTENCE = "Couldn't decide a task or description"


def category_of(subtype: Subtype) -> Category:
    """Return the category a subtype belongs to. Total over all subtypes."""
    return _SUBTYPE_TO_CATEGORY[subtype]


@dataclass(frozen=True)
class DescriptionLabel:
    """A taxonomy assignment for one snippet description.

    ``subtype`` is present exactly when the category is not Unclear, and
    must belong to the category. ``rationale`` is one line of free text.
    """

    snippet_id: str
    category: Category
    subtype: Subtype | None = None
    rationale: str | None = None
    source: LabelSource = LabelSource.MODEL
    raw_response: str | None = None

    def __post_init__(self) -> None:
        if self.category is Category.UNCLEAR:
            if self.subtype is not None:
                raise ValueError("Unclear labels carry no subtype")
        else:
            if self.subtype is None:
                raise ValueError(f"{self.category.value} label requires a subtype")
            if category_of(self.subtype) is not self.category:
                raise ValueError(
                    f"subtype {self.subtype.value!r} does not belong to "
                    f"category {self.category.value!r}"
                )
        if self.rationale is not None and len(self.rationale.splitlines()) > 1:
            raise ValueError("rationale must be a single line")


@dataclass(frozen=True)
class Refusal:
    """The model answered with the sanctioned refusal sentence."""

    snippet_id: str
    raw_response: str


@dataclass(frozen=True)
class FormatViolation:
    """The model answer does not follow the declared output format."""

    snippet_id: str
    diagnostic: str
    raw_response: str


ParseOutcome = DescriptionLabel | Refusal | FormatViolation


_CATEGORY_BY_KEY = {c.value.lower(): c for c in Category}
_SUBTYPE_BY_KEY = {s.value.lower(): s for s in Subtype}

_TYPE_LINE = re.compile(r"^type\s*:\s*(?P<value>.+?)\s*$", re.IGNORECASE)
_OPTION_LINE = re.compile(r"^option\s*:\s*(?P<value>.*?)\s*$", re.IGNORECASE)
_EXAMPLE_LINE = re.compile(r"^example\s*:\s*(?P<value>.*?)\s*$", re.IGNORECASE)


def _normalize_for_refusal(text: str) -> str:
    # Models drift on casing, apostrophe glyphs, and line wrapping.
    text = text.replace("‘", "'").replace("’", "'")
    return re.sub(r"\s+", " ", text).strip().lower()


def contains_refusal(raw_text: str) -> bool:
    """True when the response contains the sanctioned refusal sentence."""
    return _normalize_for_refusal(REFUSAL_SENTENCE) in _normalize_for_refusal(raw_text)


def parse_llm_classification(raw_text: str, snippet_id: str) -> ParseOutcome:
    """Parse one model answer into a label, a refusal, or a violation.

    Accepted shape::

        Type: <category>
        Option: <subtype>
        Example: <one line of rationale>

    Leading/trailing whitespace is tolerated and category/subtype values
    match case-insensitively. The Option line must be absent for Unclear
    (and must belong to the category otherwise). The Example line may be
    absent; when extra lines trail a valid answer they are ignored with
    a log warning. A response containing the refusal sentence anywhere is
    a :class:`Refusal`, regardless of what else it contains. All other
    inputs yield a :class:`FormatViolation` carrying a diagnostic.

    Pure: the outcome depends only on the arguments.
    """
    if not raw_text:
        raise ValueError("raw_text must be non-empty")

    if contains_refusal(raw_text):
        return Refusal(snippet_id=snippet_id, raw_response=raw_text)

    lines = [ln.strip() for ln in raw_text.strip().splitlines()]
    lines = [ln for ln in lines if ln]  # blank interior lines carry nothing
    if not lines:
        return FormatViolation(snippet_id, "empty response", raw_text)

    m = _TYPE_LINE.match(lines[0])
    if m is None:
        return FormatViolation(
            snippet_id, f"line 1: expected 'Type: <category>', got {lines[0]!r}", raw_text
        )
    category = _CATEGORY_BY_KEY.get(m.group("value").lower())
    if category is None:
        return FormatViolation(
            snippet_id, f"line 1: unknown category {m.group('value')!r}", raw_text
        )

    rest = lines[1:]
    subtype: Subtype | None = None

    if category is not Category.UNCLEAR:
        if not rest:
            return FormatViolation(
                snippet_id, f"line 2: missing 'Option:' line for {category.value}", raw_text
            )
        m = _OPTION_LINE.match(rest[0])
        if m is None:
            return FormatViolation(
                snippet_id, f"line 2: expected 'Option: <subtype>', got {rest[0]!r}", raw_text
            )
        subtype = _SUBTYPE_BY_KEY.get(m.group("value").lower())
        if subtype is None:
            return FormatViolation(
                snippet_id, f"line 2: unknown subtype {m.group('value')!r}", raw_text
            )
        if category_of(subtype) is not category:
            return FormatViolation(
                snippet_id,
                f"line 2: subtype {subtype.value!r} does not belong to {category.value!r}",
                raw_text,
            )
        rest = rest[1:]
    else:
        option = _OPTION_LINE.match(rest[0]) if rest else None
        if option is not None and option.group("value"):
            return FormatViolation(
                snippet_id, "line 2: Unclear answers must not carry an Option line", raw_text
            )

    rationale: str | None = None
    if rest:
        m = _EXAMPLE_LINE.match(rest[0])
        if m is None:
            return FormatViolation(
                snippet_id, f"expected 'Example: <one line>', got {rest[0]!r}", raw_text
            )
        rationale = m.group("value") or None
        rest = rest[1:]

    if rest:
        logger.warning(
            "snippet %s: ignoring %d extra line(s) after a valid answer", snippet_id, len(rest)
        )

    return DescriptionLabel(
        snippet_id=snippet_id,
        category=category,
        subtype=subtype,
        rationale=rationale,
        source=LabelSource.MODEL,
        raw_response=raw_text,
    )


def format_label(label: DescriptionLabel) -> str:
    """Serialize a label back into the declared output format.

    Round-trips through :func:`parse_llm_classification` (snippet_id
    aside, which the parser receives out of band).
    """
    lines = [f"Type: {label.category.value}"]
    if label.subtype is not None:
        lines.append(f"Option: {label.subtype.value}")
    if label.rationale is not None:
        lines.append(f"Example: {label.rationale}")
    return "\n".join(lines)


# --- JSONL label files -------------------------------------------------------

_LABEL_FIELD_ORDER = ("snippet_id", "category", "subtype", "rationale", "source", "raw_response")


def label_to_obj(label: DescriptionLabel) -> dict:
    """Label as a JSON-ready dict; absent optionals are omitted."""
    obj: dict = {"snippet_id": label.snippet_id, "category": label.category.value}
    if label.subtype is not None:
        obj["subtype"] = label.subtype.value
    if label.rationale is not None:
        obj["rationale"] = label.rationale
    obj["source"] = label.source.value
    if label.raw_response is not None:
        obj["raw_response"] = label.raw_response
    return obj


def label_from_obj(obj: dict) -> DescriptionLabel:
    category = _CATEGORY_BY_KEY.get(str(obj["category"]).lower())
    if category is None:
        raise ValueError(f"unknown category {obj['category']!r}")
    subtype = None
    if obj.get("subtype") is not None:
        subtype = _SUBTYPE_BY_KEY.get(str(obj["subtype"]).lower())
        if subtype is None:
            raise ValueError(f"unknown subtype {obj['subtype']!r}")
    source = LabelSource(obj.get("source", "Model"))
    return DescriptionLabel(
        snippet_id=str(obj["snippet_id"]),
        category=category,
        subtype=subtype,
        rationale=obj.get("rationale"),
        source=source,
        raw_response=obj.get("raw_response"),
    )

"""README parsing, the JSONL snippet corpus, and reproducible sampling.

A snippet is a fenced code block (``` or ~~~). Its description is the run
of prose paragraphs immediately above the fence, cut off at the nearest
structural boundary: a heading, a horizontal rule, another code block
(fenced or indented), or an HTML block. Indented code blocks and HTML
``<pre>``/``<code>`` content are never extracted as snippets.

Sampling uses selection sampling (Knuth's Algorithm S) driven by the
``random.Random`` (Mersenne Twister) ``random()`` stream, which Python
guarantees stable for a given seed across platforms and versions; the
drawn subset therefore is too, and arrives in corpus order.
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, Sequence

from .errors import DuplicateSnippetIdError, OverrideExceedsPopulationError

logger = logging.getLogger(__name__)

README_SUFFIXES = {".md", ".markdown"}

# JSONL field order is fixed so saved corpora are byte-stable.
_RECORD_FIELD_ORDER = (
    "package_name",
    "snippet_id",
    "language_hint",
    "code",
    "description",
    "source_path",
    "block_index",
)


@dataclass(frozen=True)
class SnippetRecord:
    """One fenced code block plus its paired prose description."""

    package_name: str
    snippet_id: str
    code: str
    language_hint: str | None = None
    description: str | None = None
    source_path: str = ""
    block_index: int = 0

    def __post_init__(self) -> None:
        if not self.snippet_id:
            raise ValueError("snippet_id must be non-empty")
        if not self.code.rstrip():
            raise ValueError("code must be non-empty after trailing-whitespace trim")
        if self.block_index < 0:
            raise ValueError("block_index must be non-negative")


@dataclass(frozen=True)
class SampleSpec:
    """Statistical sampling parameters plus the PRNG seed."""

    population_size: int
    confidence: float
    margin_of_error: float
    response_proportion: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population_size < 1:
            raise ValueError("population_size must be positive")
        for name in ("confidence", "margin_of_error", "response_proportion"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie strictly between 0 and 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class MalformedLine:
    """Diagnostic for one unusable corpus line; the rest of the file loads."""

    line_number: int
    reason: str


# --- markdown parsing --------------------------------------------------------

_FENCE_RE = re.compile(r"^ {0,3}(?P<fence>`{3,}|~{3,})[ \t]*(?P<info>.*?)[ \t]*$")
_ATX_HEADING_RE = re.compile(r"^ {0,3}#{1,6}(?:[ \t]|$)")
_SETEXT_UNDERLINE_RE = re.compile(r"^ {0,3}=+[ \t]*$")
_HRULE_RE = re.compile(r"^ {0,3}(?:(?:\* *){3,}|(?:- *){3,}|(?:_ *){3,})[ \t]*$")
_INDENT_RE = re.compile(r"^(?: {4,}|\t)")

_BLANK, _PROSE, _BOUNDARY = 0, 1, 2


@dataclass(frozen=True)
class _Fence:
    open_line: int
    close_line: int | None  # line index of the closing fence, None if unterminated
    info: str


def _scan_fences(lines: list[str]) -> tuple[list[_Fence], list[bool]]:
    """Locate fenced regions; returns fences plus a per-line in-fence flag."""
    fences: list[_Fence] = []
    in_fence = [False] * len(lines)
    i = 0
    while i < len(lines):
        m = _FENCE_RE.match(lines[i])
        if m is None or (m.group("fence")[0] == "`" and "`" in m.group("info")):
            i += 1
            continue
        char, min_len = m.group("fence")[0], len(m.group("fence"))
        close = None
        j = i + 1
        while j < len(lines):
            c = re.match(r"^ {0,3}(?P<fence>`{3,}|~{3,})[ \t]*$", lines[j])
            if c and c.group("fence")[0] == char and len(c.group("fence")) >= min_len:
                close = j
                break
            j += 1
        fences.append(_Fence(open_line=i, close_line=close, info=m.group("info")))
        end = close if close is not None else len(lines) - 1
        for k in range(i, end + 1):
            in_fence[k] = True
        i = end + 1
    return fences, in_fence


def _classify_lines(lines: list[str], in_fence: list[bool]) -> list[int]:
    """Assign BLANK/PROSE/BOUNDARY roles to every line outside fences."""
    roles = [_BOUNDARY] * len(lines)
    para_open = False
    html_open = False
    for i, line in enumerate(lines):
        if in_fence[i]:
            para_open = html_open = False
            continue
        if not line.strip():
            roles[i] = _BLANK
            para_open = html_open = False
            continue
        if _INDENT_RE.match(line):
            # lazy paragraph continuation stays prose; otherwise indented code
            roles[i] = _PROSE if para_open else _BOUNDARY
            continue
        if _ATX_HEADING_RE.match(line) or _SETEXT_UNDERLINE_RE.match(line) or _HRULE_RE.match(line):
            roles[i] = _BOUNDARY
            para_open = html_open = False
        elif html_open:
            roles[i] = _BOUNDARY
        elif not para_open and line.lstrip().startswith("<"):
            roles[i] = _BOUNDARY
            html_open = True
        else:
            roles[i] = _PROSE
            para_open = True
    return roles


def _description_above(lines: list[str], roles: list[int], fence_line: int) -> str | None:
    """Collect the contiguous prose paragraphs immediately above a fence."""
    paragraphs: list[list[str]] = []
    current: list[str] = []
    i = fence_line - 1
    while i >= 0:
        role = roles[i]
        if role == _BLANK:
            if current:
                paragraphs.append(current)
                current = []
            i -= 1
            continue
        if role == _PROSE:
            current.append(lines[i].rstrip())
            i -= 1
            continue
        break
    if current:
        paragraphs.append(current)
    if not paragraphs:
        return None
    paragraphs.reverse()
    text = "\n\n".join("\n".join(reversed(p)) for p in paragraphs).strip()
    return text or None


def parse_readme(markdown_text: str, source_path: str, package_name: str) -> list[SnippetRecord]:
    """Extract one record per fenced code block, paired with its description.

    Fences never closed by end of file still produce a record (code runs
    to EOF) and log a warning. Fenced blocks that are empty after
    trailing-whitespace trim are skipped but still consume a block index.
    Line endings are normalized to ``\\n`` before parsing.
    """
    lines = markdown_text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    fences, in_fence = _scan_fences(lines)
    roles = _classify_lines(lines, in_fence)

    records: list[SnippetRecord] = []
    for index, fence in enumerate(fences):
        if fence.close_line is None:
            logger.warning(
                "%s: fence opened at line %d never closed; code runs to end of file",
                source_path,
                fence.open_line + 1,
            )
            body = lines[fence.open_line + 1 :]
        else:
            body = lines[fence.open_line + 1 : fence.close_line]
        code = "\n".join(body)
        if not code.rstrip():
            logger.debug("%s: skipping empty fenced block #%d", source_path, index)
            continue
        records.append(
            SnippetRecord(
                package_name=package_name,
                snippet_id=f"{source_path}#{index}",
                code=code,
                language_hint=fence.info or None,
                description=_description_above(lines, roles, fence.open_line),
                source_path=source_path,
                block_index=index,
            )
        )
    return records


def find_readme_files(root: Path) -> list[Path]:
    """READMEs under ``root``: filename stem 'readme' (any case), .md/.markdown."""
    hits = [
        p
        for p in root.rglob("*")
        if p.is_file()
        and p.stem.lower() == "readme"
        and p.suffix.lower() in README_SUFFIXES
    ]
    return sorted(hits)


# --- JSONL persistence -------------------------------------------------------


def record_to_obj(record: SnippetRecord) -> dict:
    obj: dict = {}
    for name in _RECORD_FIELD_ORDER:
        value = getattr(record, name)
        if value is None:
            continue  # absent optionals are omitted, not null
        obj[name] = value
    return obj


def _record_from_obj(obj: dict) -> SnippetRecord:
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    unknown = set(obj) - set(_RECORD_FIELD_ORDER)
    if unknown:
        raise ValueError(f"unknown fields: {sorted(unknown)}")
    for name in ("package_name", "snippet_id", "code", "source_path"):
        if not isinstance(obj.get(name), str):
            raise ValueError(f"missing or non-string field {name!r}")
    for name in ("language_hint", "description"):
        if name in obj and not isinstance(obj[name], str):
            raise ValueError(f"field {name!r} must be a string when present")
    if not isinstance(obj.get("block_index"), int) or isinstance(obj["block_index"], bool):
        raise ValueError("missing or non-integer field 'block_index'")
    return SnippetRecord(
        package_name=obj["package_name"],
        snippet_id=obj["snippet_id"],
        code=obj["code"],
        language_hint=obj.get("language_hint"),
        description=obj.get("description"),
        source_path=obj["source_path"],
        block_index=obj["block_index"],
    )


def save_corpus(records: Iterable[SnippetRecord], path: Path | str) -> int:
    """Write records as UTF-8 JSONL; returns the record count.

    Fails before writing anything if two records share a snippet_id.
    """
    records = list(records)
    seen: set[str] = set()
    for record in records:
        if record.snippet_id in seen:
            raise DuplicateSnippetIdError(record.snippet_id)
        seen.add(record.snippet_id)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record_to_obj(record), ensure_ascii=False))
            fh.write("\n")
    return len(records)


def load_corpus(
    path: Path | str, diagnostics: list[MalformedLine] | None = None
) -> list[SnippetRecord]:
    """Read a JSONL corpus; malformed lines are skipped, duplicates are fatal.

    Each skipped line is logged and, when ``diagnostics`` is given,
    appended to it as a :class:`MalformedLine`.
    """
    records: list[SnippetRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = _record_from_obj(json.loads(line))
            except (json.JSONDecodeError, ValueError) as exc:
                logger.warning("%s:%d: skipping malformed line: %s", path, line_number, exc)
                if diagnostics is not None:
                    diagnostics.append(MalformedLine(line_number, str(exc)))
                continue
            if record.snippet_id in seen:
                raise DuplicateSnippetIdError(record.snippet_id, line_number)
            seen.add(record.snippet_id)
            records.append(record)
    return records


# --- sampling ----------------------------------------------------------------


def sample_size(
    population_size: int,
    confidence: float,
    margin_of_error: float,
    response_proportion: float = 0.5,
) -> int:
    """Finite-population survey sample size, rounded up.

    ceil( (z^2 p (1-p) / e^2) / (1 + z^2 p (1-p) / (e^2 N)) ) with z the
    two-tailed normal critical value for the confidence level (1.96 at
    95%). Always between 1 and the population size.
    """
    spec = SampleSpec(  # reuse the range validation
        population_size=population_size,
        confidence=confidence,
        margin_of_error=margin_of_error,
        response_proportion=response_proportion,
    )
    z = NormalDist().inv_cdf((1.0 + spec.confidence) / 2.0)
    p = spec.response_proportion
    x0 = z * z * p * (1.0 - p) / (spec.margin_of_error**2)
    return min(math.ceil(x0 / (1.0 + x0 / spec.population_size)), spec.population_size)


def draw_sample(
    records: Sequence[SnippetRecord],
    spec: SampleSpec | None = None,
    *,
    override: int | None = None,
    seed: int | None = None,
) -> list[SnippetRecord]:
    """Uniform sample without replacement, deterministic under the seed.

    Size is max(computed size, override) when both are given; the
    computed size uses the actual corpus length as the population. The
    output preserves corpus order. ``seed`` falls back to ``spec.seed``.
    """
    if not records:
        raise ValueError("records must be non-empty")
    if spec is None and override is None:
        raise ValueError("need a SampleSpec, an override count, or both")
    if spec is None and seed is None:
        raise ValueError("override-only sampling requires an explicit seed")
    if override is not None and override > len(records):
        raise OverrideExceedsPopulationError(
            f"override {override} exceeds corpus size {len(records)}"
        )
    k = 0
    if spec is not None:
        k = sample_size(
            len(records), spec.confidence, spec.margin_of_error, spec.response_proportion
        )
    if override is not None:
        k = max(k, override)

    # Selection sampling: scan once, keep each record with probability
    # (still needed) / (still remaining). Uniform, order-preserving.
    rng = random.Random(seed if seed is not None else spec.seed)
    selected: list[SnippetRecord] = []
    needed = k
    remaining = len(records)
    for record in records:
        if needed == 0:
            break
        if rng.random() * remaining < needed:
            selected.append(record)
            needed -= 1
        remaining -= 1
    return selected

"""Distribution tables, inter-rater agreement, and report rendering.

Percentages are rendered half-up at two decimals. Agreement is computed
exactly (rational arithmetic) and reported as floats: Cohen's kappa uses
rater-marginal chance agreement; Randolph's free-marginal kappa assumes
uniform chance 1/k. Both are reported because the two conventions answer
different questions and diverge on skewed marginals.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from fractions import Fraction
from typing import Hashable, Sequence

from .errors import DegenerateAgreementError, EmptyInputError, LengthMismatchError
from .similarity import N_BUCKETS, ScoreDistribution, bucket_label
from .taxonomy import SUBTYPES_BY_CATEGORY, Category, DescriptionLabel, Subtype

REPORT_FORMATS = ("csv", "markdown-table", "json")

_CATEGORY_PREFIX = {Category.INSTRUCTION: "a.", Category.EXAMPLE: "b.", Category.UNCLEAR: "c."}


def _percent(count: int, total: int) -> Decimal:
    return (Decimal(count) * 100 / Decimal(total)).quantize(
        Decimal("0.01"), rounding=ROUND_HALF_UP
    )


@dataclass(frozen=True)
class CountRow:
    name: str
    count: int
    percent: Decimal


@dataclass(frozen=True)
class CategoryBlock:
    category: Category
    row: CountRow
    subtype_rows: tuple[CountRow, ...]


@dataclass(frozen=True)
class DistributionReport:
    """Per-category and per-subtype counts with two-decimal percentages."""

    blocks: tuple[CategoryBlock, ...]
    total: int


def distribution(labels: Sequence[DescriptionLabel]) -> DistributionReport:
    """Count labels per category and subtype, in fixed report order.

    Every category and subtype appears, zero-filled when unused.
    """
    if not labels:
        raise EmptyInputError("no labels to report")
    total = len(labels)
    category_counts: dict[Category, int] = {c: 0 for c in Category}
    subtype_counts: dict[Subtype, int] = {s: 0 for s in Subtype}
    for label in labels:
        category_counts[label.category] += 1
        if label.subtype is not None:
            subtype_counts[label.subtype] += 1

    blocks = []
    for category in Category:
        blocks.append(
            CategoryBlock(
                category=category,
                row=CountRow(
                    name=category.value,
                    count=category_counts[category],
                    percent=_percent(category_counts[category], total),
                ),
                subtype_rows=tuple(
                    CountRow(
                        name=subtype.value,
                        count=subtype_counts[subtype],
                        percent=_percent(subtype_counts[subtype], total),
                    )
                    for subtype in SUBTYPES_BY_CATEGORY[category]
                ),
            )
        )
    return DistributionReport(blocks=tuple(blocks), total=total)


# --- agreement -----------------------------------------------------------------


@dataclass(frozen=True)
class AgreementResult:
    observed_agreement: float
    cohen_kappa: float
    free_marginal_kappa: float
    n_items: int
    n_categories: int


def cohen_kappa(
    labels_a: Sequence[Hashable],
    labels_b: Sequence[Hashable],
    categories: Sequence[Hashable] | None = None,
) -> AgreementResult:
    """Chance-corrected agreement between two raters over the same items.

    ``categories`` fixes the label space (and hence k for the
    free-marginal kappa); when omitted it is the set of labels observed.
    Raises DegenerateAgreementError when chance agreement is 1 (both
    raters constant on the same category), where Cohen's kappa is 0/0.
    """
    if len(labels_a) != len(labels_b) or not labels_a:
        raise LengthMismatchError(
            f"need two equal non-empty sequences, got {len(labels_a)} and {len(labels_b)}"
        )
    space = list(categories) if categories is not None else sorted(
        set(labels_a) | set(labels_b), key=str
    )
    unknown = (set(labels_a) | set(labels_b)) - set(space)
    if unknown:
        raise ValueError(f"labels outside the declared category space: {sorted(unknown, key=str)}")
    k = len(space)
    if k < 2:
        raise DegenerateAgreementError("agreement needs at least two categories in the space")

    n = len(labels_a)
    observed = Fraction(sum(1 for x, y in zip(labels_a, labels_b) if x == y), n)
    expected = sum(
        Fraction(sum(1 for x in labels_a if x == c), n)
        * Fraction(sum(1 for y in labels_b if y == c), n)
        for c in space
    )
    if expected == 1:
        raise DegenerateAgreementError(
            "both raters are constant on one category; Cohen's kappa is undefined"
        )
    kappa = (observed - expected) / (1 - expected)
    chance = Fraction(1, k)
    kappa_free = (observed - chance) / (1 - chance)
    return AgreementResult(
        observed_agreement=float(observed),
        cohen_kappa=float(kappa),
        free_marginal_kappa=float(kappa_free),
        n_items=n,
        n_categories=k,
    )


# --- rendering -------------------------------------------------------------------


def _fmt4(value: float) -> str:
    return str(Decimal(repr(value)).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


def _distribution_rows(report: DistributionReport) -> list[CountRow]:
    rows: list[CountRow] = []
    for block in report.blocks:
        prefix = _CATEGORY_PREFIX[block.category]
        rows.append(CountRow(f"{prefix} {block.row.name}", block.row.count, block.row.percent))
        for sub in block.subtype_rows:
            rows.append(CountRow(f"- {sub.name}", sub.count, sub.percent))
    rows.append(CountRow("Total", report.total, _percent(report.total, report.total)))
    return rows


def _emit_markdown(
    report: DistributionReport,
    agreement: AgreementResult | None,
    similarity: ScoreDistribution | None,
) -> str:
    lines = [
        "# Description category distribution",
        "",
        "| Category | Qty | % |",
        "| --- | ---: | ---: |",
    ]
    for row in _distribution_rows(report):
        lines.append(f"| {row.name} | {row.count} | {row.percent}% |")
    if agreement is not None:
        lines += [
            "",
            "## Agreement",
            "",
            "| Metric | Value |",
            "| --- | ---: |",
            f"| Observed agreement | {_fmt4(agreement.observed_agreement)} |",
            f"| Cohen's kappa | {_fmt4(agreement.cohen_kappa)} |",
            f"| Free-marginal kappa | {_fmt4(agreement.free_marginal_kappa)} |",
            f"| Items | {agreement.n_items} |",
            f"| Categories | {agreement.n_categories} |",
        ]
    if similarity is not None:
        lines += [
            "",
            "## Similarity",
            "",
            "| Statistic | Value |",
            "| --- | ---: |",
            f"| Mean F1 | {_fmt4(similarity.mean)} |",
            f"| Min F1 | {_fmt4(similarity.min)} |",
            f"| Max F1 | {_fmt4(similarity.max)} |",
            f"| Scored pairs | {similarity.count} |",
        ]
        if similarity.n_negative:
            lines.append(f"| Negative scores | {similarity.n_negative} |")
        lines += ["", "| Bucket | Count |", "| --- | ---: |"]
        for i in range(N_BUCKETS):
            lines.append(f"| {bucket_label(i)} | {similarity.histogram[i]} |")
    lines.append("")
    return "\n".join(lines)


def _emit_csv(
    report: DistributionReport,
    agreement: AgreementResult | None,
    similarity: ScoreDistribution | None,
) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["section", "name", "count", "value"])
    for row in _distribution_rows(report):
        writer.writerow(["distribution", row.name, row.count, str(row.percent)])
    if agreement is not None:
        writer.writerow(["agreement", "observed_agreement", "", _fmt4(agreement.observed_agreement)])
        writer.writerow(["agreement", "cohen_kappa", "", _fmt4(agreement.cohen_kappa)])
        writer.writerow(
            ["agreement", "free_marginal_kappa", "", _fmt4(agreement.free_marginal_kappa)]
        )
        writer.writerow(["agreement", "n_items", "", str(agreement.n_items)])
        writer.writerow(["agreement", "n_categories", "", str(agreement.n_categories)])
    if similarity is not None:
        writer.writerow(["similarity", "mean_f1", "", _fmt4(similarity.mean)])
        writer.writerow(["similarity", "min_f1", "", _fmt4(similarity.min)])
        writer.writerow(["similarity", "max_f1", "", _fmt4(similarity.max)])
        writer.writerow(["similarity", "scored_pairs", "", str(similarity.count)])
        writer.writerow(["similarity", "negative_scores", "", str(similarity.n_negative)])
        for i in range(N_BUCKETS):
            writer.writerow(["histogram", bucket_label(i), similarity.histogram[i], ""])
    return buf.getvalue()


def _emit_json(
    report: DistributionReport,
    agreement: AgreementResult | None,
    similarity: ScoreDistribution | None,
) -> str:
    doc: dict = {
        "distribution": {
            "total": report.total,
            "categories": [
                {
                    "name": block.row.name,
                    "count": block.row.count,
                    "percent": str(block.row.percent),
                    "subtypes": [
                        {"name": s.name, "count": s.count, "percent": str(s.percent)}
                        for s in block.subtype_rows
                    ],
                }
                for block in report.blocks
            ],
        }
    }
    if agreement is not None:
        doc["agreement"] = {
            "observed_agreement": agreement.observed_agreement,
            "cohen_kappa": agreement.cohen_kappa,
            "free_marginal_kappa": agreement.free_marginal_kappa,
            "n_items": agreement.n_items,
            "n_categories": agreement.n_categories,
        }
    if similarity is not None:
        doc["similarity"] = {
            "mean_f1": similarity.mean,
            "min_f1": similarity.min,
            "max_f1": similarity.max,
            "scored_pairs": similarity.count,
            "negative_scores": similarity.n_negative,
            "histogram": {bucket_label(i): similarity.histogram[i] for i in range(N_BUCKETS)},
        }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def emit_report(
    report: DistributionReport,
    agreement: AgreementResult | None = None,
    similarity: ScoreDistribution | None = None,
    format: str = "markdown-table",
) -> str:
    """Render a report; same inputs always give identical bytes.

    Sections for absent agreement/similarity data are omitted entirely.
    """
    if format == "markdown-table":
        return _emit_markdown(report, agreement, similarity)
    if format == "csv":
        return _emit_csv(report, agreement, similarity)
    if format == "json":
        return _emit_json(report, agreement, similarity)
    raise ValueError(f"unknown report format {format!r}; expected one of {REPORT_FORMATS}")

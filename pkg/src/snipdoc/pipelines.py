"""Batch orchestration: classify a sample, or generate and score descriptions.

Both pipelines are resumable through a JSONL checkpoint keyed by
snippet_id: existing outcomes are kept, only missing ids are processed,
and the checkpoint is rewritten in input order at the end, so a resumed
run converges on the same bytes as a fresh one under a deterministic
backend. Telemetry (attempts, latency) goes to the run log only, never
into checkpoints. Per-record failures are recorded and the run
continues; the only hard abort is the fail-fast circuit when most of the
first requests cannot reach the backend.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from .corpus import SnippetRecord
from .errors import (
    BackendCircuitOpenError,
    BackendError,
    BackendTimeoutError,
    BackendUnreachableError,
    MissingDescriptionError,
    SnipdocError,
)
from .gateway import BackendConfig, Gateway, make_backend
from .prompts import build_classification_prompt, build_generation_prompt
from .similarity import SimilarityScore, TokenEmbeddingSet, bertscore, tokenize
from .taxonomy import (
    DescriptionLabel,
    FormatViolation,
    ParseOutcome,
    Refusal,
    label_from_obj,
    label_to_obj,
    parse_llm_classification,
)

logger = logging.getLogger(__name__)

#: Completions attempted per record before a format violation sticks.
REASK_ATTEMPTS = 3

#: The fail-fast circuit looks at this many leading requests.
CIRCUIT_WINDOW = 20

TIMESTAMP_ENV = "SNIPDOC_RUN_TIMESTAMP"

DIVERGENCE_F1_THRESHOLD = 0.9


def run_timestamp() -> str:
    """Current UTC timestamp; override with SNIPDOC_RUN_TIMESTAMP for
    byte-reproducible run metadata."""
    forced = os.environ.get(TIMESTAMP_ENV)
    if forced:
        return forced
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def config_digest(config: BackendConfig) -> str:
    doc = {
        "endpoint_url": config.endpoint_url,
        "model_name": config.model_name,
        "timeout": config.timeout,
        "max_retries": config.max_retries,
        "max_in_flight": config.max_in_flight,
        "backoff_base_ms": config.backoff_base_ms,
        "auth_token_set": bool(config.auth_token),
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


def run_metadata(config: BackendConfig) -> dict[str, str]:
    return {
        "model_name": config.model_name,
        "timestamp": run_timestamp(),
        "config_digest": config_digest(config),
    }


@dataclass
class ClassifiedCorpus:
    """Partition of a classified sample: every input id lands in exactly
    one of labels, refusals, or violations."""

    labels: list[DescriptionLabel]
    refusals: list[str]
    violations: list[tuple[str, str]]
    run_metadata: dict[str, str]

    def validate_partition(self, sample_ids: Sequence[str]) -> None:
        seen = [label.snippet_id for label in self.labels]
        seen += list(self.refusals)
        seen += [sid for sid, _ in self.violations]
        if sorted(seen) != sorted(sample_ids):
            raise AssertionError("classified outcome does not partition the sample ids")


@dataclass(frozen=True)
class GenerationOutcome:
    """Per-snippet result of generate-then-score.

    ``divergent`` is a descriptive flag: F1 below 0.9 with both sides
    labelled and the categories disagreeing. Failed records carry a
    diagnostic and no similarity.
    """

    snippet_id: str
    original_description: str
    generated_description: str | None
    similarity: SimilarityScore | None
    original_label: DescriptionLabel | None = None
    generated_label: DescriptionLabel | None = None
    divergent: bool = False
    diagnostic: str | None = None


def _divergent(
    similarity: SimilarityScore | None,
    original_label: DescriptionLabel | None,
    generated_label: DescriptionLabel | None,
) -> bool:
    return (
        similarity is not None
        and similarity.f1 < DIVERGENCE_F1_THRESHOLD
        and original_label is not None
        and generated_label is not None
        and original_label.category is not generated_label.category
    )


class RunLog:
    """Machine-readable JSONL run log, one object per record event."""

    def __init__(self, path: Path | str | None):
        self.path = Path(path) if path is not None else None

    def write(self, **fields) -> None:
        if self.path is None:
            return
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(fields, ensure_ascii=False))
            fh.write("\n")


@dataclass(frozen=True)
class _Telemetry:
    attempts: int = 0
    latency_ms: float = 0.0
    cached: bool = False
    unreachable: bool = False


def _is_unreachable(exc: BackendError) -> bool:
    # empty responses are the model misbehaving, not the transport
    return isinstance(exc, (BackendUnreachableError, BackendTimeoutError))


def _load_checkpoint(path: Path | None) -> dict[str, dict]:
    if path is None or not path.exists():
        return {}
    entries: dict[str, dict] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entries[str(obj["snippet_id"])] = obj
            except (json.JSONDecodeError, KeyError, TypeError):
                logger.warning("%s:%d: ignoring malformed checkpoint line", path, line_number)
    return entries


def _rewrite_checkpoint(path: Path | None, objs: Sequence[dict]) -> None:
    if path is None:
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")


def _run_workers(
    items: Sequence[SnippetRecord],
    worker: Callable[[SnippetRecord], tuple[dict, _Telemetry]],
    max_in_flight: int,
) -> list[tuple[dict, _Telemetry]]:
    """Run the worker over items, results in input order.

    The first CIRCUIT_WINDOW requests run as a probe batch: if more than
    half of them cannot reach the backend, the whole run aborts.
    """

    def run_batch(batch: Sequence[SnippetRecord]) -> list[tuple[dict, _Telemetry]]:
        if max_in_flight <= 1 or len(batch) <= 1:
            return [worker(record) for record in batch]
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(worker, batch))

    probe, rest = items[:CIRCUIT_WINDOW], items[CIRCUIT_WINDOW:]
    results = run_batch(probe)
    unreachable = sum(1 for _, telemetry in results if telemetry.unreachable)
    if unreachable > len(probe) // 2:
        raise BackendCircuitOpenError(
            f"{unreachable} of the first {len(probe)} requests could not reach the backend"
        )
    results.extend(run_batch(rest))
    return results


# --- classification pipeline -----------------------------------------------------


def _classify_once(
    gateway: Gateway, record: SnippetRecord, description: str | None = None
) -> tuple[ParseOutcome, int, float]:
    """Prompt, complete, parse; re-ask on format violations.

    Returns the final outcome plus total completion attempts and latency.
    """
    target = record if description is None else replace(record, description=description)
    bundle = build_classification_prompt(target)
    attempts = 0
    latency = 0.0
    outcome: ParseOutcome | None = None
    for _ in range(REASK_ATTEMPTS):
        completion = gateway.complete(bundle)
        attempts += completion.attempt_count
        latency += completion.latency_ms
        outcome = parse_llm_classification(completion.raw_text, record.snippet_id)
        if not isinstance(outcome, FormatViolation):
            break
    assert outcome is not None
    return outcome, attempts, latency


def classify_corpus(
    sample: Sequence[SnippetRecord],
    config: BackendConfig,
    *,
    gateway: Gateway | None = None,
    checkpoint_path: Path | str | None = None,
    run_log: RunLog | None = None,
) -> ClassifiedCorpus:
    """Classify every sampled description; outcomes partition the sample.

    Requires a description on every record. Backend failures on single
    records become violations; only the fail-fast circuit aborts the run.
    """
    missing = [r.snippet_id for r in sample if not r.description]
    if missing:
        raise MissingDescriptionError(
            f"{len(missing)} record(s) lack descriptions, e.g. {missing[:3]}"
        )
    gateway = gateway or Gateway(make_backend(config), config)
    run_log = run_log or RunLog(None)
    checkpoint = Path(checkpoint_path) if checkpoint_path else None
    existing = _load_checkpoint(checkpoint)

    def worker(record: SnippetRecord) -> tuple[dict, _Telemetry]:
        cached = existing.get(record.snippet_id)
        if cached is not None:
            return cached, _Telemetry(cached=True)
        try:
            outcome, attempts, latency = _classify_once(gateway, record)
        except BackendError as exc:
            obj = {
                "snippet_id": record.snippet_id,
                "kind": "violation",
                "diagnostic": f"backend failure: {exc}",
            }
            return obj, _Telemetry(unreachable=_is_unreachable(exc))
        except SnipdocError as exc:  # e.g. prompt over the character budget
            obj = {
                "snippet_id": record.snippet_id,
                "kind": "violation",
                "diagnostic": f"{type(exc).__name__}: {exc}",
            }
            return obj, _Telemetry()
        obj = {"snippet_id": record.snippet_id}
        if isinstance(outcome, DescriptionLabel):
            obj.update(kind="label", label=label_to_obj(outcome))
        elif isinstance(outcome, Refusal):
            obj.update(kind="refusal", raw_response=outcome.raw_response)
        else:
            obj.update(kind="violation", diagnostic=outcome.diagnostic)
        return obj, _Telemetry(attempts=attempts, latency_ms=latency)

    results = _run_workers(list(sample), worker, config.max_in_flight)

    labels: list[DescriptionLabel] = []
    refusals: list[str] = []
    violations: list[tuple[str, str]] = []
    persisted: list[dict] = []
    for record, (obj, telemetry) in zip(sample, results):
        persisted.append(obj)
        run_log.write(
            stage="classify",
            snippet_id=record.snippet_id,
            status="cached" if telemetry.cached else obj["kind"],
            attempts=telemetry.attempts,
            latency_ms=telemetry.latency_ms,
        )
        if obj["kind"] == "label":
            labels.append(label_from_obj(obj["label"]))
        elif obj["kind"] == "refusal":
            refusals.append(obj["snippet_id"])
        else:
            violations.append((obj["snippet_id"], obj.get("diagnostic", "")))

    _rewrite_checkpoint(checkpoint, persisted)
    classified = ClassifiedCorpus(
        labels=labels,
        refusals=refusals,
        violations=violations,
        run_metadata=run_metadata(config),
    )
    classified.validate_partition([r.snippet_id for r in sample])
    return classified


# --- generation pipeline ----------------------------------------------------------


def _embedding_set(gateway: Gateway, text: str) -> TokenEmbeddingSet:
    return TokenEmbeddingSet(tokenize(text), gateway.embed(text))


def _score_pair(gateway: Gateway, generated: str, original: str) -> SimilarityScore:
    return bertscore(
        candidate=_embedding_set(gateway, generated),
        reference=_embedding_set(gateway, original),
    )


def _outcome_to_obj(outcome: GenerationOutcome) -> dict:
    obj: dict = {
        "snippet_id": outcome.snippet_id,
        "original_description": outcome.original_description,
        "generated_description": outcome.generated_description,
    }
    if outcome.similarity is not None:
        obj["similarity"] = {
            "precision": outcome.similarity.precision,
            "recall": outcome.similarity.recall,
            "f1": outcome.similarity.f1,
        }
    else:
        obj["similarity"] = None
    if outcome.original_label is not None:
        obj["original_label"] = label_to_obj(outcome.original_label)
    if outcome.generated_label is not None:
        obj["generated_label"] = label_to_obj(outcome.generated_label)
    obj["divergent"] = outcome.divergent
    if outcome.diagnostic is not None:
        obj["diagnostic"] = outcome.diagnostic
    return obj


def _outcome_from_obj(obj: dict) -> GenerationOutcome:
    similarity = None
    if obj.get("similarity") is not None:
        s = obj["similarity"]
        similarity = SimilarityScore(precision=s["precision"], recall=s["recall"], f1=s["f1"])
    original_label = label_from_obj(obj["original_label"]) if obj.get("original_label") else None
    generated_label = label_from_obj(obj["generated_label"]) if obj.get("generated_label") else None
    return GenerationOutcome(
        snippet_id=str(obj["snippet_id"]),
        original_description=obj.get("original_description", ""),
        generated_description=obj.get("generated_description"),
        similarity=similarity,
        original_label=original_label,
        generated_label=generated_label,
        divergent=bool(obj.get("divergent", False)),
        diagnostic=obj.get("diagnostic"),
    )


def generate_and_score(
    sample: Sequence[SnippetRecord],
    config: BackendConfig,
    classify_both: bool = True,
    *,
    gateway: Gateway | None = None,
    checkpoint_path: Path | str | None = None,
    run_log: RunLog | None = None,
) -> list[GenerationOutcome]:
    """Generate a description per snippet from code alone and score it
    against the original; optionally classify both texts.

    Requires code and a description on every record; outcomes come back
    in input order, failures recorded per record with a diagnostic.
    """
    missing = [r.snippet_id for r in sample if not r.description]
    if missing:
        raise MissingDescriptionError(
            f"{len(missing)} record(s) lack descriptions, e.g. {missing[:3]}"
        )
    gateway = gateway or Gateway(make_backend(config), config)
    run_log = run_log or RunLog(None)
    checkpoint = Path(checkpoint_path) if checkpoint_path else None
    existing = _load_checkpoint(checkpoint)

    def worker(record: SnippetRecord) -> tuple[dict, _Telemetry]:
        cached = existing.get(record.snippet_id)
        if cached is not None:
            return cached, _Telemetry(cached=True)

        original = record.description or ""
        generated: str | None = None
        similarity: SimilarityScore | None = None
        original_label: DescriptionLabel | None = None
        generated_label: DescriptionLabel | None = None
        diagnostic: str | None = None
        attempts = 0
        latency = 0.0
        unreachable = False

        try:
            completion = gateway.complete(build_generation_prompt(record))
            attempts += completion.attempt_count
            latency += completion.latency_ms
            generated = completion.raw_text.strip()
            similarity = _score_pair(gateway, generated, original)
            if classify_both:
                for which in ("original", "generated"):
                    text = original if which == "original" else generated
                    outcome, extra_attempts, extra_latency = _classify_once(
                        gateway, record, description=text
                    )
                    attempts += extra_attempts
                    latency += extra_latency
                    if isinstance(outcome, DescriptionLabel):
                        if which == "original":
                            original_label = outcome
                        else:
                            generated_label = outcome
        except BackendError as exc:
            diagnostic = f"backend failure: {exc}"
            unreachable = _is_unreachable(exc)
        except SnipdocError as exc:
            diagnostic = f"{type(exc).__name__}: {exc}"
        except ValueError as exc:
            diagnostic = f"unscorable pair: {exc}"

        obj = _outcome_to_obj(
            GenerationOutcome(
                snippet_id=record.snippet_id,
                original_description=original,
                generated_description=generated,
                similarity=similarity,
                original_label=original_label,
                generated_label=generated_label,
                divergent=_divergent(similarity, original_label, generated_label),
                diagnostic=diagnostic,
            )
        )
        return obj, _Telemetry(
            attempts=attempts, latency_ms=latency, unreachable=unreachable
        )

    results = _run_workers(list(sample), worker, config.max_in_flight)

    outcomes: list[GenerationOutcome] = []
    persisted: list[dict] = []
    for record, (obj, telemetry) in zip(sample, results):
        persisted.append(obj)
        outcome = _outcome_from_obj(obj)
        outcomes.append(outcome)
        status = "error" if outcome.diagnostic else "scored"
        run_log.write(
            stage="generate_and_score",
            snippet_id=record.snippet_id,
            status="cached" if telemetry.cached else status,
            attempts=telemetry.attempts,
            latency_ms=telemetry.latency_ms,
            detail=outcome.diagnostic,
        )
    _rewrite_checkpoint(checkpoint, persisted)
    return outcomes


def suggest_descriptions(
    sample: Sequence[SnippetRecord],
    config: BackendConfig,
    *,
    gateway: Gateway | None = None,
    run_log: RunLog | None = None,
) -> list[dict]:
    """Generation without scoring, for snippets that lack descriptions.

    Returns patch-style suggestion objects in input order; records whose
    generation failed carry a diagnostic instead of a suggestion.
    """
    gateway = gateway or Gateway(make_backend(config), config)
    run_log = run_log or RunLog(None)

    def worker(record: SnippetRecord) -> tuple[dict, _Telemetry]:
        obj: dict = {
            "snippet_id": record.snippet_id,
            "source_path": record.source_path,
            "block_index": record.block_index,
        }
        try:
            completion = gateway.complete(build_generation_prompt(record))
        except BackendError as exc:
            obj["diagnostic"] = f"backend failure: {exc}"
            return obj, _Telemetry(unreachable=_is_unreachable(exc))
        except SnipdocError as exc:
            obj["diagnostic"] = f"{type(exc).__name__}: {exc}"
            return obj, _Telemetry()
        obj["suggested_description"] = completion.raw_text.strip()
        return obj, _Telemetry(
            attempts=completion.attempt_count, latency_ms=completion.latency_ms
        )

    results = _run_workers(list(sample), worker, config.max_in_flight)
    suggestions = []
    for obj, telemetry in results:
        run_log.write(
            stage="suggest",
            snippet_id=obj["snippet_id"],
            status="error" if "diagnostic" in obj else "suggested",
            attempts=telemetry.attempts,
            latency_ms=telemetry.latency_ms,
        )
        suggestions.append(obj)
    return suggestions


def write_scores_csv(outcomes: Sequence[GenerationOutcome], path: Path | str) -> int:
    """Write the scores file: snippet_id, precision, recall, f1, divergent.

    Only scored outcomes appear; failures live in the checkpoint and the
    run log. Returns the number of rows written.
    """
    rows = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["snippet_id", "precision", "recall", "f1", "divergent"])
        for outcome in outcomes:
            if outcome.similarity is None:
                continue
            writer.writerow(
                [
                    outcome.snippet_id,
                    repr(outcome.similarity.precision),
                    repr(outcome.similarity.recall),
                    repr(outcome.similarity.f1),
                    "true" if outcome.divergent else "false",
                ]
            )
            rows += 1
    return rows

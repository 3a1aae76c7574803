"""Command-line surface: extract, sample, classify, generate, score, report, agree.

Configuration precedence is flags > environment (SNIPDOC_ENDPOINT,
SNIPDOC_MODEL) > JSON config file. Every pipeline run writes
run_metadata.json with the fully resolved configuration so the run can
be reproduced from its output directory alone.

Exit codes: 0 success, 1 empty result, 2 usage/input error, 3 backend
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import metadata
from pathlib import Path

from . import corpus, pipelines, reports, taxonomy
from .errors import BackendError, SnipdocError
from .gateway import MOCK_SCHEME, BackendConfig, Gateway, make_backend
from .similarity import score_distribution

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "SNIPDOC_ENDPOINT"
MODEL_ENV = "SNIPDOC_MODEL"

EXIT_OK = 0
EXIT_EMPTY = 1
EXIT_USAGE = 2
EXIT_BACKEND = 3


def _version() -> str:
    try:
        return metadata.version("snipdoc")
    except metadata.PackageNotFoundError:
        return "0.0.0+local"


# --- config resolution ----------------------------------------------------------


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    return doc


def resolve_backend(args: argparse.Namespace) -> tuple[BackendConfig, str | None, dict]:
    """Merge flags, env vars, and the config file into a BackendConfig.

    Returns the config, the backend URI (mock:... or None for HTTP), and
    the resolved settings for run_metadata.
    """
    file_cfg = _load_config_file(getattr(args, "config", None))
    endpoint = (
        getattr(args, "endpoint", None)
        or os.environ.get(ENDPOINT_ENV)
        or file_cfg.get("endpoint")
        or "http://localhost:11434"
    )
    model = (
        getattr(args, "model", None)
        or os.environ.get(MODEL_ENV)
        or file_cfg.get("model")
        or "llama3"
    )
    backend_uri = getattr(args, "backend", None) or file_cfg.get("backend")
    concurrency = getattr(args, "concurrency", None) or file_cfg.get("concurrency") or 4
    config = BackendConfig(
        endpoint_url=endpoint,
        model_name=model,
        timeout=float(file_cfg.get("timeout", 120.0)),
        max_retries=int(file_cfg.get("max_retries", 2)),
        max_in_flight=int(concurrency),
        backoff_base_ms=float(file_cfg.get("backoff_base_ms", 250.0)),
        auth_token=file_cfg.get("auth_token"),
    )
    resolved = {
        "endpoint": endpoint,
        "model": model,
        "backend": backend_uri or endpoint,
        "concurrency": config.max_in_flight,
        "timeout": config.timeout,
        "max_retries": config.max_retries,
        "backoff_base_ms": config.backoff_base_ms,
        "auth_token_set": bool(config.auth_token),
    }
    return config, backend_uri, resolved


def _write_run_metadata(out_dir: Path, command: str, config: BackendConfig, resolved: dict) -> None:
    doc = {
        "command": command,
        "snipdoc_version": _version(),
        "model_name": config.model_name,
        "timestamp": pipelines.run_timestamp(),
        "config_digest": pipelines.config_digest(config),
        "resolved_config": resolved,
    }
    with open(out_dir / "run_metadata.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def _write_labels(labels, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for label in labels:
            fh.write(json.dumps(taxonomy.label_to_obj(label), ensure_ascii=False))
            fh.write("\n")


def _load_labels(path: Path) -> list[taxonomy.DescriptionLabel]:
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                labels.append(taxonomy.label_from_obj(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{line_number}: bad label line: {exc}") from exc
    return labels


def _write_report_files(out_dir: Path, report, agreement=None, similarity=None) -> None:
    for fmt, suffix in (("markdown-table", "md"), ("csv", "csv"), ("json", "json")):
        text = reports.emit_report(report, agreement, similarity, format=fmt)
        (out_dir / f"report.{suffix}").write_text(text, encoding="utf-8")


# --- commands ---------------------------------------------------------------------


def cmd_extract(args: argparse.Namespace) -> int:
    root = Path(args.input_dir)
    if not root.is_dir():
        print(f"error: {root} is not a readable directory", file=sys.stderr)
        return EXIT_USAGE
    readmes = corpus.find_readme_files(root)
    records = []
    failed: list[str] = []
    for path in readmes:
        rel = path.relative_to(root).as_posix()
        try:
            text = path.read_bytes().decode("utf-8-sig")  # tolerate a BOM
        except UnicodeDecodeError as exc:
            failed.append(rel)
            print(f"warning: {rel}: not valid UTF-8, skipped ({exc})", file=sys.stderr)
            continue
        package = path.parent.relative_to(root).as_posix()
        if package == ".":
            package = root.name
        records.extend(corpus.parse_readme(text, source_path=rel, package_name=package))
    corpus.save_corpus(records, args.out)
    if failed:
        print(f"{len(failed)} file(s) skipped: {', '.join(failed)}", file=sys.stderr)
    print(f"extracted {len(records)} snippet record(s) from {len(readmes)} README file(s) -> {args.out}")
    return EXIT_OK if records else EXIT_EMPTY


def cmd_sample(args: argparse.Namespace) -> int:
    if args.n is None and args.confidence is None and args.margin is None:
        print("error: need --n, or --confidence/--margin, or both", file=sys.stderr)
        return EXIT_USAGE
    records = corpus.load_corpus(args.corpus)
    if not records:
        print("error: corpus is empty", file=sys.stderr)
        return EXIT_EMPTY
    spec = None
    if args.confidence is not None or args.margin is not None:
        spec = corpus.SampleSpec(
            population_size=len(records),
            confidence=args.confidence if args.confidence is not None else 0.95,
            margin_of_error=args.margin if args.margin is not None else 0.05,
            response_proportion=args.proportion,
            seed=args.seed,
        )
    sample = corpus.draw_sample(records, spec, override=args.n, seed=args.seed)
    corpus.save_corpus(sample, args.out)
    print(f"sampled {len(sample)} of {len(records)} record(s) -> {args.out}")
    return EXIT_OK


def _records_with_descriptions(path: str) -> tuple[list[corpus.SnippetRecord], int]:
    records = corpus.load_corpus(path)
    with_desc = [r for r in records if r.description]
    return with_desc, len(records) - len(with_desc)


def cmd_classify(args: argparse.Namespace) -> int:
    config, backend_uri, resolved = resolve_backend(args)
    sample, skipped = _records_with_descriptions(args.corpus)
    if skipped:
        print(f"note: {skipped} record(s) without descriptions were skipped", file=sys.stderr)
    if not sample:
        print("error: no records with descriptions to classify", file=sys.stderr)
        return EXIT_EMPTY
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gateway = Gateway(make_backend(config, backend_uri), config)
    classified = pipelines.classify_corpus(
        sample,
        config,
        gateway=gateway,
        checkpoint_path=out_dir / "classify_checkpoint.jsonl",
        run_log=pipelines.RunLog(out_dir / "run_log.jsonl"),
    )
    _write_labels(classified.labels, out_dir / "labels.jsonl")
    report_labels = list(classified.labels)
    if args.merge_refusals:
        report_labels += [
            taxonomy.DescriptionLabel(snippet_id=sid, category=taxonomy.Category.UNCLEAR)
            for sid in classified.refusals
        ]
    if report_labels:
        _write_report_files(out_dir, reports.distribution(report_labels))
    _write_run_metadata(out_dir, "classify", config, resolved)
    print(
        f"labels: {len(classified.labels)}, refusals: {len(classified.refusals)}, "
        f"violations: {len(classified.violations)} -> {out_dir}"
    )
    if not classified.labels:
        return EXIT_EMPTY
    if args.fail_on_unclear:
        unclear = sum(1 for l in report_labels if l.category is taxonomy.Category.UNCLEAR)
        if unclear > 0:
            print(f"{unclear} label(s) are Unclear", file=sys.stderr)
            return EXIT_EMPTY
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    config, backend_uri, resolved = resolve_backend(args)
    records = corpus.load_corpus(args.corpus)
    if not args.all:
        records = [r for r in records if not r.description]
    if not records:
        print("error: no records to generate descriptions for", file=sys.stderr)
        return EXIT_EMPTY
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    gateway = Gateway(make_backend(config, backend_uri), config)
    suggestions = pipelines.suggest_descriptions(
        records,
        config,
        gateway=gateway,
        run_log=pipelines.RunLog(out.parent / "run_log.jsonl"),
    )
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for obj in suggestions:
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")
    _write_run_metadata(out.parent, "generate", config, resolved)
    ok = sum(1 for s in suggestions if "suggested_description" in s)
    print(f"suggested descriptions for {ok} of {len(suggestions)} snippet(s) -> {out}")
    return EXIT_OK if ok else EXIT_EMPTY


def cmd_score(args: argparse.Namespace) -> int:
    config, backend_uri, resolved = resolve_backend(args)
    sample, skipped = _records_with_descriptions(args.corpus)
    if skipped:
        print(f"note: {skipped} record(s) without descriptions were skipped", file=sys.stderr)
    if not sample:
        print("error: no records with descriptions to score against", file=sys.stderr)
        return EXIT_EMPTY
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gateway = Gateway(make_backend(config, backend_uri), config)
    outcomes = pipelines.generate_and_score(
        sample,
        config,
        classify_both=not args.no_classify,
        gateway=gateway,
        checkpoint_path=out_dir / "score_checkpoint.jsonl",
        run_log=pipelines.RunLog(out_dir / "run_log.jsonl"),
    )
    pipelines.write_scores_csv(outcomes, out_dir / "scores.csv")
    scored = [o.similarity for o in outcomes if o.similarity is not None]
    generated_labels = [o.generated_label for o in outcomes if o.generated_label is not None]
    if scored:
        similarity = score_distribution(scored)
        if generated_labels:
            _write_report_files(out_dir, reports.distribution(generated_labels), None, similarity)
        divergent = sum(1 for o in outcomes if o.divergent)
        print(
            f"scored {len(scored)} of {len(outcomes)} pair(s), "
            f"mean F1 {similarity.mean:.4f}, divergent: {divergent} -> {out_dir}"
        )
    _write_run_metadata(out_dir, "score", config, resolved)
    return EXIT_OK if scored else EXIT_EMPTY


def cmd_report(args: argparse.Namespace) -> int:
    labels = _load_labels(Path(args.labels))
    if args.merge_refusals:
        if not args.checkpoint:
            print("error: --merge-refusals needs --checkpoint", file=sys.stderr)
            return EXIT_USAGE
        with open(args.checkpoint, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                if obj.get("kind") == "refusal":
                    labels.append(
                        taxonomy.DescriptionLabel(
                            snippet_id=obj["snippet_id"], category=taxonomy.Category.UNCLEAR
                        )
                    )
    if not labels:
        print("error: no labels to report", file=sys.stderr)
        return EXIT_EMPTY
    report = reports.distribution(labels)
    text = reports.emit_report(report, format=args.format)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_report_files(out_dir, report)
        print(f"report written -> {out_dir}")
    else:
        print(text, end="")
    unclear = next(
        b.row.count for b in report.blocks if b.category is taxonomy.Category.UNCLEAR
    )
    if args.fail_on_unclear and unclear > 0:
        print(f"{unclear} label(s) are Unclear", file=sys.stderr)
        return EXIT_EMPTY
    return EXIT_OK


def cmd_agree(args: argparse.Namespace) -> int:
    labels_a = _load_labels(Path(args.labels_a))
    labels_b = _load_labels(Path(args.labels_b))
    by_id_a = {l.snippet_id: l for l in labels_a}
    by_id_b = {l.snippet_id: l for l in labels_b}
    if len(by_id_a) != len(labels_a) or len(by_id_b) != len(labels_b):
        print("error: duplicate snippet_ids in a label file", file=sys.stderr)
        return EXIT_USAGE
    if set(by_id_a) != set(by_id_b):
        print("error: label files cover different snippet_ids", file=sys.stderr)
        return EXIT_USAGE
    ids = sorted(by_id_a)

    if args.level == "category":
        seq_a = [by_id_a[i].category.value for i in ids]
        seq_b = [by_id_b[i].category.value for i in ids]
        space = [c.value for c in taxonomy.Category]
    else:
        # Unclear has no subtype; it is its own bucket at this level.
        def key(label: taxonomy.DescriptionLabel) -> str:
            return label.subtype.value if label.subtype else label.category.value

        seq_a = [key(by_id_a[i]) for i in ids]
        seq_b = [key(by_id_b[i]) for i in ids]
        space = [s.value for s in taxonomy.Subtype] + [taxonomy.Category.UNCLEAR.value]

    try:
        result = reports.cohen_kappa(seq_a, seq_b, categories=space)
    except SnipdocError as exc:
        print(f"agreement undefined: {exc}", file=sys.stderr)
        return EXIT_OK
    print(f"items: {result.n_items} ({args.level} level, {result.n_categories} categories)")
    print(f"observed agreement: {result.observed_agreement:.4f}")
    print(f"Cohen's kappa: {result.cohen_kappa:.4f}")
    print(f"free-marginal kappa: {result.free_marginal_kappa:.4f}")
    return EXIT_OK


# --- parser -----------------------------------------------------------------------


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", help=f"backend URI, e.g. {MOCK_SCHEME}<fixture.json>")
    parser.add_argument("--endpoint", help="HTTP endpoint URL (env SNIPDOC_ENDPOINT)")
    parser.add_argument("--model", help="model name (env SNIPDOC_MODEL)")
    parser.add_argument("--concurrency", type=int, help="max in-flight requests")
    parser.add_argument("--config", help="JSON config file (lowest precedence)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snipdoc",
        description="Mine README code snippets, classify their descriptions, "
        "and score generated descriptions against the originals.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="walk a directory tree and extract snippet records")
    p.add_argument("input_dir")
    p.add_argument("-o", "--out", required=True, help="output corpus JSONL")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("sample", help="draw a reproducible random sample from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, help="explicit sample size (overrides upward)")
    p.add_argument("--confidence", type=float, help="confidence level, e.g. 0.95")
    p.add_argument("--margin", type=float, help="margin of error, e.g. 0.05")
    p.add_argument("--proportion", type=float, default=0.5, help="response proportion")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("classify", help="classify every sampled description with the backend")
    p.add_argument("--corpus", required=True, help="sample JSONL to classify")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--merge-refusals", action="store_true", help="count refusals as Unclear")
    p.add_argument("--fail-on-unclear", action="store_true")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("generate", help="suggest descriptions for snippets lacking one")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="suggestions JSONL")
    p.add_argument("--all", action="store_true", help="also regenerate described snippets")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("score", help="generate descriptions from code and score vs originals")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-classify", action="store_true", help="skip classifying both texts")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="distribution report for a label file")
    p.add_argument("--labels", required=True)
    p.add_argument("--checkpoint", help="classify checkpoint (for --merge-refusals)")
    p.add_argument("--merge-refusals", action="store_true")
    p.add_argument(
        "--format", choices=reports.REPORT_FORMATS, default="markdown-table"
    )
    p.add_argument("--out-dir", help="write report.md/.csv/.json instead of stdout")
    p.add_argument("--fail-on-unclear", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("agree", help="inter-rater agreement between two label files")
    p.add_argument("--labels-a", required=True)
    p.add_argument("--labels-b", required=True)
    p.add_argument("--level", choices=("category", "subtype"), default="category")
    p.set_defaults(func=cmd_agree)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("SNIPDOC_LOG_LEVEL", "WARNING"))
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (SnipdocError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

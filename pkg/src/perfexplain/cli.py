"""Command-line surface.

Commands: ``explain``, ``eval-mcq``, ``eval-opt``, ``rank-profiles``,
``validate-report``. Every command honors ``--replay <cassette>`` for fully
offline, deterministic execution. Exit codes: 0 success, 1 hard error,
2 degraded success (pass cap exceeded, degraded role outputs, or citation
value mismatches), so CI can tell the difference.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .drgpu import AdapterConfig
from .errors import PerfExplainError
from .evalkit import (
    CommandExecutor,
    CommandExecutorConfig,
    load_mcq_questions,
    run_mcq,
    run_opt,
    summarize_results,
    summary_to_dict,
    validate_mcq_questions,
)
from .gateway import (
    Cassette,
    HttpProvider,
    HttpProviderConfig,
    Provider,
    RecordingProvider,
    ReplayProvider,
)
from .ingest import load_bundle, serialize_metrics_csv
from .model import ExplanationReport, ProfileBundle
from .pipeline import (
    ROLE_TOGGLES,
    PipelineAbort,
    PipelineConfig,
    findings_to_dict,
    profile_distances,
    run_full,
    validate_citations,
)
from .roles import extract_citations

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DEGRADED = 2


def _add_provider_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--provider", metavar="CONFIG.json",
                        help="HTTP provider config (endpoint, model, credential env var)")
    parser.add_argument("--replay", metavar="CASSETTE.json",
                        help="replay recorded responses; fully offline and deterministic")
    parser.add_argument("--record", metavar="CASSETTE.json",
                        help="record live responses into a cassette (requires --provider)")


def _build_provider(
    args: argparse.Namespace, fallback: dict | None = None
) -> tuple[Provider, Cassette | None, Path | None]:
    if args.replay:
        return ReplayProvider(Cassette.load(args.replay)), None, None
    if args.provider:
        raw = json.loads(Path(args.provider).read_text(encoding="utf-8"))
    elif fallback:
        raw = fallback
    else:
        raise PerfExplainError("no provider: pass --provider CONFIG.json or --replay CASSETTE.json")
    config = HttpProviderConfig(
        endpoint=raw["endpoint"],
        model=raw["model"],
        credential_env=raw.get("credential_env", "PERFEXPLAIN_API_KEY"),
        context_limit=raw.get("context_limit"),
        max_retries=int(raw.get("max_retries", 3)),
        default_temperature=raw.get("default_temperature"),
    )
    provider: Provider = HttpProvider(config)
    if args.record:
        cassette = Cassette()
        return RecordingProvider(provider, cassette), cassette, Path(args.record)
    return provider, None, None


def _load_pipeline_config(args: argparse.Namespace) -> tuple[PipelineConfig, dict]:
    """Effective config from defaults < config file < flags; also returns the
    raw file content (for e.g. its provider settings)."""
    config = PipelineConfig()
    raw: dict = {}
    if getattr(args, "config", None):
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        toggles = raw.get("roles", {})
        kwargs = {name: bool(toggles[name]) for name in ROLE_TOGGLES if name in toggles}
        for key in ("max_passes", "extra_passes", "source_truncation_chars"):
            if key in raw and raw[key] is not None:
                kwargs[key] = int(raw[key])
        if raw.get("drgpu_adapter"):
            kwargs["drgpu_adapter"] = AdapterConfig(
                command=raw["drgpu_adapter"]["command"],
                args=tuple(raw["drgpu_adapter"].get("args", [])),
            )
        config = replace(config, **kwargs)
    # Flags win over the config file.
    for name in getattr(args, "enable", None) or []:
        config = replace(config, **{name: True})
    for name in getattr(args, "disable", None) or []:
        config = replace(config, **{name: False})
    if getattr(args, "max_passes", None) is not None:
        config = replace(config, max_passes=args.max_passes)
    return config, raw


def _subset_profiles(bundle: ProfileBundle, spec: str) -> ProfileBundle:
    """--profiles <k|ids>: keep the k lowest-distance profiles, or the named ids."""
    if spec.isdigit():
        k = int(spec)
        keep = {pid for pid, _ in profile_distances(bundle)[:k]}
    else:
        keep = {s.strip() for s in spec.split(",") if s.strip()}
        unknown = keep - set(bundle.profile_ids())
        if unknown:
            raise PerfExplainError(f"--profiles names unknown ids: {', '.join(sorted(unknown))}")
    profiles = tuple(p for p in bundle.profiles if p.id in keep)
    if not profiles:
        raise PerfExplainError("--profiles selected no profiles")
    return ProfileBundle(
        manifest=bundle.manifest, profiles=profiles, sources=bundle.sources,
        guidelines=bundle.guidelines,
    )


def cmd_explain(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle_dir)
    if args.profiles:
        bundle = _subset_profiles(bundle, args.profiles)
    config, raw_config = _load_pipeline_config(args)
    provider, cassette, cassette_path = _build_provider(args, fallback=raw_config.get("provider"))
    out_dir = Path(args.out_dir)
    try:
        result = run_full(bundle, provider, config, out_dir=out_dir)
    except PipelineAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        if cassette is not None and cassette_path is not None:
            cassette.save(cassette_path)
    print(f"report written to {out_dir / 'report.md'}")
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_DEGRADED if result.degraded else EXIT_OK


def _mcq_context(args: argparse.Namespace, bundle: ProfileBundle) -> str:
    spec = args.context
    if spec == "none":
        return ""
    if spec == "code":
        return "\n\n".join(f"// {s.path}\n{s.content}" for s in bundle.sources)
    if spec == "code+data":
        code = "\n\n".join(f"// {s.path}\n{s.content}" for s in bundle.sources)
        tables = "\n\n".join(
            f"Profile {p.id} (arch={p.config.gpu_arch}):\n"
            + serialize_metrics_csv(list(p.metrics.values()))
            for p in bundle.profiles
        )
        return code + "\n\n" + tables
    return Path(spec).read_text(encoding="utf-8")


def cmd_eval_mcq(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle_dir)
    questions = load_mcq_questions(Path(args.questions).read_text(encoding="utf-8"))
    violations, warnings = validate_mcq_questions(questions)
    if violations:
        for v in violations:
            print(f"error: {v}", file=sys.stderr)
        return EXIT_ERROR
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    provider, cassette, cassette_path = _build_provider(args)
    context = _mcq_context(args, bundle)
    try:
        scores, score1 = run_mcq(
            questions, context, provider,
            attempts=args.attempts, seed=args.seed, jobs=args.jobs,
        )
    finally:
        if cassette is not None and cassette_path is not None:
            cassette.save(cassette_path)
    results = {
        "task": "mcq",
        "attempts": args.attempts,
        "context": args.context,
        "scores": scores,
        "score_at_1": score1,
    }
    payload = json.dumps(results, indent=2)
    print(payload)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_eval_opt(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle_dir)
    report_text = Path(args.report).read_text(encoding="utf-8")
    if args.source:
        source = Path(args.source).read_text(encoding="utf-8")
    else:
        source = "\n\n".join(s.content for s in bundle.sources)
    executor = CommandExecutor(CommandExecutorConfig.from_toml(args.executor))
    provider, cassette, cassette_path = _build_provider(args)
    try:
        outcomes = run_opt(
            report_text, source, provider, executor,
            attempts=args.attempts, max_retries=args.retries, jobs=args.jobs,
        )
    except PerfExplainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        if cassette is not None and cassette_path is not None:
            cassette.save(cassette_path)
    summary = summarize_results([outcomes])
    results = {
        "task": "opt",
        "attempts": args.attempts,
        "outcomes": [
            {
                "attempt_index": o.attempt_index,
                "status": o.status,
                "speedup": o.speedup,
                "retries_used": o.retries_used,
            }
            for o in outcomes
        ],
        "summary": summary_to_dict(summary),
    }
    payload = json.dumps(results, indent=2)
    print(payload)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_rank_profiles(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle_dir)
    for pid, distance in profile_distances(bundle):
        print(f"{pid}\t{distance:.6f}")
    return EXIT_OK


def cmd_validate_report(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle_dir)
    text = Path(args.report).read_text(encoding="utf-8")
    citations = extract_citations(text)
    report = ExplanationReport(summary_section="", citations=tuple(citations))
    findings = validate_citations(report, bundle)
    print(json.dumps(findings_to_dict(findings), indent=2))
    mismatches = sum(1 for f in findings if f.status == "value_mismatch")
    if mismatches:
        print(f"{mismatches} citation value mismatch(es)", file=sys.stderr)
        return EXIT_DEGRADED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perfexplain",
        description="Explain GPU kernel performance from profiler metric bundles "
        "and evaluate explanation quality on downstream tasks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "explain",
        help="run the full analysis pipeline over a bundle directory",
        description="Role toggles (--enable/--disable): metric_selector, "
        "profile_selector, drgpu_evaluator, reviewer.",
    )
    p.add_argument("bundle_dir")
    p.add_argument("--config", help="pipeline config JSON (flags win over the file)")
    p.add_argument("--out-dir", default="perfexplain-run", help="run directory to write")
    p.add_argument("--profiles", metavar="K|IDS",
                   help="analyze only the K lowest-distance profiles, or a comma-separated id list")
    p.add_argument("--enable", action="append", choices=ROLE_TOGGLES, metavar="ROLE",
                   help=f"enable a role; one of: {', '.join(ROLE_TOGGLES)}")
    p.add_argument("--disable", action="append", choices=ROLE_TOGGLES, metavar="ROLE",
                   help=f"disable a role; one of: {', '.join(ROLE_TOGGLES)}")
    p.add_argument("--max-passes", type=int, default=None)
    _add_provider_args(p)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("eval-mcq", help="multiple-choice question answering task")
    p.add_argument("bundle_dir")
    p.add_argument("questions", help="questions JSON (question/correct_choices/incorrect_choices)")
    p.add_argument("--context", default="none",
                   help="report.md path, or one of: code, code+data, none")
    p.add_argument("--attempts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="also write results JSON here")
    _add_provider_args(p)
    p.set_defaults(fn=cmd_eval_mcq)

    p = sub.add_parser("eval-opt", help="code optimization task")
    p.add_argument("bundle_dir")
    p.add_argument("report", help="explanation report (markdown) used as context")
    p.add_argument("--executor", required=True, metavar="EXEC.toml",
                   help="executor adapter config: build_cmd, test_cmd, time_cmd")
    p.add_argument("--source", help="kernel source file (default: bundle sources concatenated)")
    p.add_argument("--attempts", type=int, default=20)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="also write results JSON here")
    _add_provider_args(p)
    p.set_defaults(fn=cmd_eval_opt)

    p = sub.add_parser("rank-profiles", help="print profiles by distance from defaults")
    p.add_argument("bundle_dir")
    p.set_defaults(fn=cmd_rank_profiles)

    p = sub.add_parser("validate-report", help="ground a report's citations against the bundle")
    p.add_argument("bundle_dir")
    p.add_argument("report")
    p.set_defaults(fn=cmd_validate_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PerfExplainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Orchestration of the two iterative stages, aggregation, review, and
report validation.

Termination is provable, not hoped for: selection clamps guarantee each
source-stage iteration reviews a new file and each profile-stage pass analyzes
at least one new profile, so stages finish within |files| and within the pass
cap respectively, whatever the model says. Every role invocation is recorded
in order; with a run directory given, the trace is persisted as numbered JSON
files even when a stage aborts mid-run.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass
from pathlib import Path

from . import prompts, render, roles
from .drgpu import AdapterConfig, report_for_profile
from .errors import AdapterFailure, GatewayError, MissingDefault, PerfExplainError
from .gateway import Provider
from .ingest import parse_number
from .model import (
    AlgorithmSummary,
    AnalysisPass,
    ExplanationReport,
    HypothesisSet,
    KernelProfile,
    MetricCitation,
    ProfileBundle,
    ReviewReport,
    validate_bundle,
)
from .roles import RoleOutput

logger = logging.getLogger(__name__)

ROLE_TOGGLES = ("metric_selector", "profile_selector", "drgpu_evaluator", "reviewer")


@dataclass(frozen=True)
class PipelineConfig:
    """Effective run configuration; exactly the switches of the method matrix
    and ablations, plus operational caps."""

    metric_selector: bool = True
    profile_selector: bool = True
    drgpu_evaluator: bool = False
    reviewer: bool = True
    max_passes: int | None = None  # None: 2 x |profiles|, floor 4
    extra_passes: int = 0
    source_truncation_chars: int = 24000
    drgpu_adapter: AdapterConfig | None = None

    def pass_cap(self, profile_count: int) -> int:
        if self.max_passes is not None:
            return self.max_passes
        return max(4, 2 * profile_count)

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.drgpu_adapter is not None:
            out["drgpu_adapter"] = {
                "command": self.drgpu_adapter.command,
                "args": list(self.drgpu_adapter.args),
            }
        return out


class PipelineAbort(PerfExplainError):
    """A gateway error ended a stage; carries the partial trace."""

    def __init__(self, cause: Exception, trace: list[RoleOutput]):
        super().__init__(f"pipeline aborted: {cause}")
        self.cause = cause
        self.trace = trace


@dataclass(frozen=True)
class CitationFinding:
    citation: MetricCitation
    status: str  # ok | unknown_profile | unknown_metric | value_mismatch
    actual: str | None = None
    relative_error: float | None = None


@dataclass
class RunResult:
    report: ExplanationReport
    review: ReviewReport | None
    summary: AlgorithmSummary
    hypotheses: HypothesisSet
    passes: list[AnalysisPass]
    trace: list[RoleOutput]
    warnings: tuple[str, ...]
    findings: list[CitationFinding]

    @property
    def degraded(self) -> bool:
        return bool(self.warnings) or any(t.degraded for t in self.trace)


# --- profile ranking ------------------------------------------------------------

def profile_distances(bundle: ProfileBundle) -> list[tuple[str, float]]:
    """(profile id, distance-from-defaults) sorted ascending, ties by id.

    Per numeric knob the distance is |value - default| / (max - min observed
    over the bundle), with a degenerate range treated as 1; categorical knobs
    contribute 0 or 1; gpu_arch joins as a categorical knob when the defaults
    declare one. Ties break lexicographically by profile id (the id preserves
    filename ordering).
    """
    defaults = bundle.manifest.defaults
    for decl in bundle.manifest.knobs:
        if decl.name not in defaults:
            raise MissingDefault(decl.name)

    spans: dict[str, float] = {}
    for decl in bundle.manifest.knobs:
        if decl.type != "numeric":
            continue
        values = [
            float(p.config.knobs[decl.name])
            for p in bundle.profiles
            if isinstance(p.config.knobs.get(decl.name), (int, float))
        ]
        span = (max(values) - min(values)) if values else 0.0
        spans[decl.name] = span if span > 0 else 1.0

    def distance(profile: KernelProfile) -> float:
        total = 0.0
        for decl in bundle.manifest.knobs:
            value = profile.config.knobs.get(decl.name, defaults[decl.name])
            default = defaults[decl.name]
            if decl.type == "numeric":
                total += abs(float(value) - float(default)) / spans[decl.name]
            else:
                total += 0.0 if value == default else 1.0
        if "gpu_arch" in defaults:
            total += 0.0 if profile.config.gpu_arch == defaults["gpu_arch"] else 1.0
        return total

    pairs = [(p.id, distance(p)) for p in bundle.profiles]
    pairs.sort(key=lambda pair: (pair[1], pair[0]))
    return pairs


def rank_profiles_by_default_distance(bundle: ProfileBundle) -> list[str]:
    """Profile ids by ascending distance from the default configuration."""
    return [pid for pid, _ in profile_distances(bundle)]


# --- citation validation ----------------------------------------------------------

_NUMBER_IN_TEXT = re.compile(r"-?\d+(?:,\d{3})*(?:\.\d+)?(?:[eE][+-]?\d+)?")


def _cited_number(quoted: str) -> float | None:
    direct = parse_number(quoted)
    if direct is not None:
        return direct
    m = _NUMBER_IN_TEXT.search(quoted)
    return parse_number(m.group(0)) if m else None


def validate_citations(report: ExplanationReport, bundle: ProfileBundle) -> list[CitationFinding]:
    """Ground every report citation against the bundle.

    Numeric citations mismatch above 1% relative error; text metrics compare
    verbatim. Purely data-driven, no LLM involved.
    """
    findings = []
    for citation in report.citations:
        profile = bundle.profile_by_id(citation.profile_id)
        if profile is None:
            findings.append(CitationFinding(citation, "unknown_profile"))
            continue
        metric = profile.metrics.get(citation.metric_name)
        if metric is None:
            findings.append(CitationFinding(citation, "unknown_metric"))
            continue
        if metric.is_numeric:
            actual = float(metric.value)
            cited = _cited_number(citation.quoted_value)
            if cited is None:
                findings.append(
                    CitationFinding(citation, "value_mismatch", actual=str(metric.value),
                                    relative_error=float("inf"))
                )
                continue
            if actual == 0.0:
                rel = 0.0 if cited == 0.0 else float("inf")
            else:
                rel = abs(cited - actual) / abs(actual)
            if rel > 0.01:
                findings.append(
                    CitationFinding(citation, "value_mismatch", actual=str(metric.value),
                                    relative_error=rel)
                )
            else:
                findings.append(CitationFinding(citation, "ok", actual=str(metric.value),
                                                relative_error=rel))
        else:
            if citation.quoted_value.strip() == str(metric.value).strip():
                findings.append(CitationFinding(citation, "ok", actual=str(metric.value)))
            else:
                findings.append(
                    CitationFinding(citation, "value_mismatch", actual=str(metric.value))
                )
    return findings


# --- stages -----------------------------------------------------------------------

def run_source_stage(
    bundle: ProfileBundle, provider: Provider, config: PipelineConfig
) -> tuple[AlgorithmSummary, HypothesisSet, list[RoleOutput]]:
    """Describe, select, summarize, hypothesize until every file is reviewed.

    Single-file bundles bypass selection entirely. Gateway errors abort with
    the partial trace attached to the raised PipelineAbort.
    """
    trace: list[RoleOutput] = []
    files = {s.path: s for s in bundle.sources}
    order = sorted(files)
    summary = AlgorithmSummary(text="")
    hypotheses: HypothesisSet = ()
    try:
        descriptions: dict[str, str] = {}
        for path in order:
            description, out = roles.describe_source_file(files[path], provider)
            descriptions[path] = description
            trace.append(out)

        reviewed: set[str] = set()
        while len(reviewed) < len(order):
            if len(order) == 1:
                choice = order[0]
            else:
                choice, out = roles.select_source_file(
                    descriptions, frozenset(reviewed), summary, provider
                )
                trace.append(out)
            summary, out = roles.summarize_algorithm(summary, files[choice], provider)
            trace.append(out)
            hypotheses, out = roles.hypothesize_performance(
                hypotheses, summary, files[choice], provider
            )
            trace.append(out)
            reviewed.add(choice)
    except GatewayError as exc:
        raise PipelineAbort(exc, trace) from exc
    return summary, hypotheses, trace


def _drgpu_report(config: PipelineConfig, selected: list[KernelProfile]) -> str:
    if config.drgpu_adapter is None:
        raise AdapterFailure("no adapter command configured")
    sections = []
    for profile in selected:
        sections.append(f"[profile {profile.id}]\n" + report_for_profile(config.drgpu_adapter, profile))
    return "\n".join(sections)


def run_profile_stage(
    bundle: ProfileBundle,
    summary: AlgorithmSummary,
    hypotheses: HypothesisSet,
    provider: Provider,
    config: PipelineConfig,
) -> tuple[list[AnalysisPass], list[RoleOutput], tuple[str, ...]]:
    """Iterate select-profiles / select-metrics / analyze until coverage.

    Every profile id ends up in at least one pass unless the pass cap cuts
    the stage short, in which case a coverage warning is returned (and must
    be surfaced in the report header).
    """
    trace: list[RoleOutput] = []
    warnings: list[str] = []
    passes: list[AnalysisPass] = []
    rank_order = rank_profiles_by_default_distance(bundle)
    by_id = {p.id: p for p in bundle.profiles}
    all_ids = set(by_id)
    analyzed: set[str] = set()
    guidelines = bundle.guidelines if bundle.guidelines is not None else prompts.default_guidelines()
    cap = config.pass_cap(len(bundle.profiles))
    extra_done = 0

    try:
        while True:
            covered = all_ids <= analyzed
            if covered and extra_done >= config.extra_passes:
                break
            if len(passes) >= cap:
                if not covered:
                    warnings.append(
                        f"pass cap exceeded: analyzed {len(analyzed)} of {len(all_ids)} "
                        f"profiles within {cap} passes"
                    )
                break

            if len(bundle.profiles) == 1:
                selected_ids = [bundle.profiles[0].id]
            elif covered:
                selected_ids = [rank_order[extra_done % len(rank_order)]]
            elif not config.profile_selector:
                selected_ids = [next(pid for pid in rank_order if pid not in analyzed)]
            else:
                selected_ids, out = roles.select_profiles(
                    list(bundle.profiles),
                    frozenset(analyzed),
                    rank_order,
                    summary,
                    hypotheses,
                    passes,
                    provider,
                )
                if out is not None:
                    trace.append(out)
            selected = [by_id[pid] for pid in selected_ids]

            metric_names, out = roles.select_metrics(
                selected, summary, hypotheses, provider, enabled=config.metric_selector
            )
            if out is not None:
                trace.append(out)

            analysis, out = roles.analyze_profiles(
                pass_index=len(passes) + 1,
                selected=selected,
                metric_names=metric_names,
                summary=summary,
                sources=list(bundle.sources),
                guidelines=guidelines,
                hypotheses=hypotheses,
                provider=provider,
                source_budget=config.source_truncation_chars,
            )
            trace.append(out)

            if config.drgpu_evaluator:
                try:
                    drgpu_text = _drgpu_report(config, selected)
                except AdapterFailure as exc:
                    warnings.append(f"pass {analysis.pass_index}: {exc}")
                    logger.warning("stall-tree adapter failed; pass kept unchanged: %s", exc)
                else:
                    analysis, out = roles.evaluate_drgpu(analysis, drgpu_text, provider)
                    trace.append(out)

            passes.append(analysis)
            if covered:
                extra_done += 1
            analyzed.update(analysis.selected_profile_ids)
    except GatewayError as exc:
        raise PipelineAbort(exc, trace) from exc
    return passes, trace, tuple(warnings)


def run_full(
    bundle: ProfileBundle,
    provider: Provider,
    config: PipelineConfig | None = None,
    out_dir: str | Path | None = None,
) -> RunResult:
    """End-to-end run: both stages, aggregation, optional review, grounding.

    With ``out_dir`` given, the run directory (report.md, review.md when the
    reviewer ran, trace/NNN-<role>.json, findings.json, run-config.json) is
    written; on a stage abort the partial trace is still persisted.
    """
    config = config or PipelineConfig()
    violations = validate_bundle(bundle)
    if violations:
        raise ValueError("bundle invalid: " + "; ".join(violations))

    trace: list[RoleOutput] = []
    try:
        summary, hypotheses, stage_trace = run_source_stage(bundle, provider, config)
        trace.extend(stage_trace)
        passes, stage_trace, warnings = run_profile_stage(
            bundle, summary, hypotheses, provider, config
        )
        trace.extend(stage_trace)

        guidelines = bundle.guidelines if bundle.guidelines is not None else prompts.default_guidelines()
        report, out = roles.aggregate_analyses(passes, summary, guidelines, provider)
        trace.append(out)

        review: ReviewReport | None = None
        if config.reviewer:
            report_text = render.report_markdown(report, warnings)
            hypotheses, review, out = roles.review_explanation(report_text, hypotheses, provider)
            if out is not None:
                trace.append(out)
    except PipelineAbort as abort:
        trace.extend(abort.trace)
        if out_dir is not None:
            _persist_trace(Path(out_dir), trace)
        # Re-raise carrying the combined trace, not just the aborted stage's.
        raise PipelineAbort(abort.cause, trace) from abort.cause
    except GatewayError as exc:
        if out_dir is not None:
            _persist_trace(Path(out_dir), trace)
        raise PipelineAbort(exc, trace) from exc

    findings = validate_citations(report, bundle)
    result = RunResult(
        report=report,
        review=review,
        summary=summary,
        hypotheses=hypotheses,
        passes=passes,
        trace=trace,
        warnings=warnings,
        findings=findings,
    )
    if out_dir is not None:
        persist_run(Path(out_dir), result, config, bundle)
    return result


# --- run directory ----------------------------------------------------------------

def _persist_trace(out_dir: Path, trace: list[RoleOutput]) -> None:
    trace_dir = out_dir / "trace"
    trace_dir.mkdir(parents=True, exist_ok=True)
    for i, entry in enumerate(trace, 1):
        payload = {
            "role": entry.role_name,
            "degraded": entry.degraded,
            "parsed": entry.parsed,
            "raw_text": entry.raw_text,
        }
        path = trace_dir / f"{i:03d}-{entry.role_name}.json"
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def findings_to_dict(findings: list[CitationFinding]) -> list[dict]:
    out = []
    for f in findings:
        entry: dict = {
            "profile_id": f.citation.profile_id,
            "metric_name": f.citation.metric_name,
            "quoted_value": f.citation.quoted_value,
            "status": f.status,
        }
        if f.actual is not None:
            entry["actual"] = f.actual
        if f.relative_error is not None:
            entry["relative_error"] = f.relative_error if f.relative_error != float("inf") else "inf"
        out.append(entry)
    return out


def persist_run(
    out_dir: Path, result: RunResult, config: PipelineConfig, bundle: ProfileBundle
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.md").write_text(
        render.report_markdown(result.report, result.warnings), encoding="utf-8"
    )
    if result.review is not None:
        (out_dir / "review.md").write_text(render.review_markdown(result.review), encoding="utf-8")
    _persist_trace(out_dir, result.trace)
    (out_dir / "findings.json").write_text(
        json.dumps(findings_to_dict(result.findings), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    snapshot = {
        "config": config.to_dict(),
        "bundle": {
            "app_name": bundle.manifest.app_name,
            "kernel_name": bundle.manifest.kernel_name,
            "profiles": len(bundle.profiles),
            "sources": len(bundle.sources),
        },
    }
    (out_dir / "run-config.json").write_text(
        json.dumps(snapshot, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )

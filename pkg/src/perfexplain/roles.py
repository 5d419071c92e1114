"""Agent roles: one prompt template plus structured-output parser per role.

Each role is a pure function of (context, provider) returning its domain value
together with a RoleOutput for the trace. Model text is never trusted:
selections are clamped to the valid set, and every parse failure has a
deterministic fallback, so a run always terminates with a (possibly degraded)
result instead of crashing.

Structured output convention: roles that need structure ask for a fenced JSON
block appended to prose; the parser takes the last well-formed fenced block.
The analyzer uses two line-level conventions instead, so its output can never
"fail to parse":

* inline citations ``[[profile:<id> metric:<name> = <value>]]``
* suggestion lines ``SUGGESTION: <title> :: <rationale> [refs: a.cu:1-9]``
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace
from typing import Any

from . import prompts
from .errors import ParseFailure
from .gateway import Provider, single_turn
from .model import (
    AlgorithmSummary,
    AnalysisPass,
    ExplanationReport,
    HypothesisSet,
    HypothesisStatus,
    KernelProfile,
    MetricCitation,
    PerformanceHypothesis,
    ReviewReport,
    ReviewVerdict,
    SourceFile,
    Suggestion,
)

logger = logging.getLogger(__name__)

# Selector and reviewer roles run at temperature 0 (deterministic control
# flow); prose-producing roles use the provider default.
SELECTOR_TEMPERATURE = 0.0

FENCED_BLOCK_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)
CITATION_RE = re.compile(
    r"\[\[\s*profile:\s*(?P<profile>[^\s\]]+)\s+metric:\s*(?P<metric>[^\s=\]]+)\s*=\s*(?P<value>[^\]]+?)\s*\]\]"
)
SUGGESTION_RE = re.compile(
    r"^\s*SUGGESTION:\s*(?P<title>.+?)\s*::\s*(?P<rationale>.*?)\s*(?:\[refs:\s*(?P<refs>[^\]]*)\])?\s*$",
    re.MULTILINE,
)


@dataclass(frozen=True)
class RoleOutput:
    """Trace record of one role invocation."""

    role_name: str
    raw_text: str
    parsed: Any = None
    degraded: bool = False


def last_json_block(text: str) -> Any:
    """The last well-formed fenced JSON block in the text; ParseFailure if none."""
    for match in reversed(FENCED_BLOCK_RE.findall(text)):
        try:
            return json.loads(match)
        except json.JSONDecodeError:
            continue
    raise ParseFailure("no well-formed fenced JSON block in model output")


def extract_citations(text: str) -> list[MetricCitation]:
    return [
        MetricCitation(profile_id=m["profile"], metric_name=m["metric"], quoted_value=m["value"])
        for m in CITATION_RE.finditer(text)
    ]


def extract_suggestions(text: str) -> list[Suggestion]:
    """Parse the SUGGESTION-line block out of analysis prose."""
    out = []
    for m in SUGGESTION_RE.finditer(text):
        refs = tuple(r.strip() for r in (m["refs"] or "").split(",") if r.strip())
        out.append(Suggestion(title=m["title"], rationale=m["rationale"], code_refs=refs))
    return out


def _truncate_words(text: str, max_words: int) -> str:
    words = text.split()
    if len(words) <= max_words:
        return text.strip()
    return " ".join(words[:max_words])


def _hypotheses_json(hypotheses: HypothesisSet) -> str:
    if not hypotheses:
        return "(none yet)"
    return json.dumps(
        [
            {
                "id": h.id,
                "statement": h.statement,
                "code_refs": [f"{f}:{lines}" for f, lines in h.code_refs],
                "status": h.status.value,
            }
            for h in hypotheses
        ],
        indent=2,
        ensure_ascii=False,
    )


# --- source code inspection roles --------------------------------------------

def describe_source_file(file: SourceFile, provider: Provider) -> tuple[str, RoleOutput]:
    """One-paragraph description of a source file, capped at 200 words."""
    if not file.content.strip():
        raise ValueError(f"cannot describe empty file {file.path!r}")
    system, user = prompts.render(
        "describe_file", path=file.path, sloc=str(file.sloc), content=file.content
    )
    response = provider.complete(single_turn(system, user))
    description = _truncate_words(response.content, 200)
    return description, RoleOutput("describe_source_file", response.content, parsed=description)


def select_source_file(
    descriptions: dict[str, str],
    reviewed: frozenset[str],
    summary: AlgorithmSummary,
    provider: Provider,
) -> tuple[str, RoleOutput]:
    """Pick the next file to review; always returns an unreviewed path.

    The model's choice is clamped: naming a reviewed or unknown path falls
    back to the lexicographically first unreviewed file, as does any parse
    failure.
    """
    unreviewed = sorted(set(descriptions) - set(reviewed))
    if not unreviewed:
        raise ValueError("select_source_file requires at least one unreviewed file")
    file_list = "\n".join(
        f"- {path}{' [reviewed]' if path in reviewed else ''}: {descriptions[path]}"
        for path in sorted(descriptions)
    )
    system, user = prompts.render(
        "select_file",
        summary=summary.text or "(empty)",
        file_list=file_list,
        unreviewed=", ".join(unreviewed),
    )
    response = provider.complete(single_turn(system, user, temperature=SELECTOR_TEMPERATURE))
    degraded = False
    try:
        parsed = last_json_block(response.content)
        choice = parsed.get("file") if isinstance(parsed, dict) else None
    except ParseFailure:
        choice = None
        degraded = True
    if choice not in unreviewed:
        if choice is not None:
            logger.warning("file selector chose %r; clamped to %r", choice, unreviewed[0])
        choice = unreviewed[0]
    return choice, RoleOutput("select_source_file", response.content, parsed=choice, degraded=degraded)


def summarize_algorithm(
    current: AlgorithmSummary, file: SourceFile, provider: Provider
) -> tuple[AlgorithmSummary, RoleOutput]:
    """Refine the running algorithm summary with one more file."""
    system, user = prompts.render(
        "summarize",
        current_summary=current.text or "(empty)",
        path=file.path,
        content=file.content,
    )
    response = provider.complete(single_turn(system, user))
    text = response.content.strip()
    degraded = False
    if not text:
        text = current.text or f"(no summary available; reviewed {file.path})"
        degraded = True
    updated = AlgorithmSummary(text=text, files_covered=current.files_covered | {file.path})
    return updated, RoleOutput(
        "summarize_algorithm",
        response.content,
        parsed={"text": updated.text, "files_covered": sorted(updated.files_covered)},
        degraded=degraded,
    )


def _next_hypothesis_id(existing: set[str]) -> str:
    top = 0
    for hid in existing:
        m = re.fullmatch(r"h(\d+)", hid)
        if m:
            top = max(top, int(m.group(1)))
    return f"h{top + 1}"


def _parse_code_refs(raw: Any) -> tuple[tuple[str, str], ...]:
    refs = []
    if isinstance(raw, list):
        for entry in raw:
            if isinstance(entry, dict) and isinstance(entry.get("file"), str):
                refs.append((entry["file"], str(entry.get("lines", ""))))
            elif isinstance(entry, str) and ":" in entry:
                file, _, lines = entry.rpartition(":")
                refs.append((file, lines))
    return tuple(refs)


def hypothesize_performance(
    hypotheses: HypothesisSet,
    summary: AlgorithmSummary,
    file: SourceFile,
    provider: Provider,
) -> tuple[HypothesisSet, RoleOutput]:
    """Update the running hypothesis set from one source file.

    Existing ids survive (statements may be revised); new hypotheses get
    fresh sequential ids; every status stays pending. On parse failure the
    input set is returned unchanged with the degraded flag set.
    """
    system, user = prompts.render(
        "hypothesize",
        hypotheses_json=_hypotheses_json(hypotheses),
        summary=summary.text or "(empty)",
        path=file.path,
        content=file.content,
    )
    response = provider.complete(single_turn(system, user))
    try:
        parsed = last_json_block(response.content)
        if not isinstance(parsed, list):
            raise ParseFailure("hypothesis update must be a JSON array")
    except ParseFailure:
        logger.warning("hypothesizer output unparseable; keeping previous set")
        return hypotheses, RoleOutput(
            "hypothesize_performance", response.content, parsed=None, degraded=True
        )

    by_id = {h.id: h for h in hypotheses}
    known_ids = set(by_id)
    revised: dict[str, PerformanceHypothesis] = {}
    fresh: list[PerformanceHypothesis] = []
    for entry in parsed:
        if not isinstance(entry, dict) or not isinstance(entry.get("statement"), str):
            continue
        statement = entry["statement"].strip()
        if not statement:
            continue
        refs = _parse_code_refs(entry.get("code_refs"))
        hid = entry.get("id")
        if isinstance(hid, str) and hid in known_ids:
            revised[hid] = replace(by_id[hid], statement=statement, code_refs=refs or by_id[hid].code_refs)
        else:
            new_id = _next_hypothesis_id(known_ids | {h.id for h in fresh})
            fresh.append(PerformanceHypothesis(id=new_id, statement=statement, code_refs=refs))

    updated = tuple(revised.get(h.id, h) for h in hypotheses) + tuple(fresh)
    return updated, RoleOutput(
        "hypothesize_performance",
        response.content,
        parsed=[{"id": h.id, "statement": h.statement} for h in updated],
    )


# --- profile inspection roles -------------------------------------------------

def _profile_line(profile: KernelProfile, analyzed: bool) -> str:
    knobs = ", ".join(f"{k}={v}" for k, v in profile.config.knobs.items()) or "defaults"
    mark = " [analyzed]" if analyzed else ""
    return f"- {profile.id} (arch={profile.config.gpu_arch}; {knobs}){mark}"


def select_profiles(
    profiles: list[KernelProfile],
    analyzed: frozenset[str],
    fallback_order: list[str],
    summary: AlgorithmSummary,
    hypotheses: HypothesisSet,
    prior_passes: list[AnalysisPass],
    provider: Provider,
) -> tuple[list[str], RoleOutput | None]:
    """Choose the profile group for the next analysis pass.

    Bypassed with zero LLM calls for single-profile bundles. Output is
    clamped to valid ids and forced to contain at least one unanalyzed
    profile while any remain (progress guarantee); parse failure falls back
    to the next unanalyzed profile in ``fallback_order``.
    """
    valid_ids = [p.id for p in profiles]
    if len(profiles) == 1:
        return [profiles[0].id], None
    remaining = [pid for pid in fallback_order if pid not in analyzed]
    if not remaining:
        raise ValueError("select_profiles requires at least one unanalyzed profile")

    prior = "\n".join(
        f"- pass {p.pass_index}: profiles {', '.join(p.selected_profile_ids)}; "
        f"metrics {', '.join(p.selected_metric_names[:6])}"
        for p in prior_passes
    ) or "(none)"
    system, user = prompts.render(
        "select_profiles",
        profile_table="\n".join(_profile_line(p, p.id in analyzed) for p in profiles),
        summary=summary.text or "(empty)",
        hypotheses=_hypotheses_json(hypotheses),
        prior_passes=prior,
    )
    response = provider.complete(single_turn(system, user, temperature=SELECTOR_TEMPERATURE))
    degraded = False
    chosen: list[str] = []
    try:
        parsed = last_json_block(response.content)
        raw_ids = parsed.get("profile_ids") if isinstance(parsed, dict) else None
        if not isinstance(raw_ids, list):
            raise ParseFailure("profile selection must contain a profile_ids list")
        seen = set()
        for pid in raw_ids:
            if isinstance(pid, str) and pid in valid_ids and pid not in seen:
                chosen.append(pid)
                seen.add(pid)
    except ParseFailure:
        degraded = True
    if degraded:
        chosen = [remaining[0]]
        logger.warning("profile selector output unparseable; falling back to %r", remaining[0])
    elif not any(pid not in analyzed for pid in chosen):
        logger.warning("profile selector made no progress; injecting %r", remaining[0])
        chosen.append(remaining[0])
    return chosen, RoleOutput("select_profiles", response.content, parsed=chosen, degraded=degraded)


def available_metric_names(selected: list[KernelProfile]) -> list[str]:
    """Union of metric names across the selected profiles, appearance order.

    Union rather than intersection: a metric present in only one selected
    profile is still analyzable for that profile.
    """
    names: dict[str, None] = {}
    for profile in selected:
        for name in profile.metrics:
            names.setdefault(name)
    return list(names)


def select_metrics(
    selected: list[KernelProfile],
    summary: AlgorithmSummary,
    hypotheses: HypothesisSet,
    provider: Provider,
    enabled: bool = True,
) -> tuple[list[str], RoleOutput | None]:
    """Choose the metric subset for the pass; disabled role returns all names."""
    all_names = available_metric_names(selected)
    if not all_names:
        raise ValueError("selected profiles share no metrics")
    if not enabled:
        return all_names, None

    units: dict[str, str] = {}
    for profile in selected:
        for name, metric in profile.metrics.items():
            if metric.unit and name not in units:
                units[name] = metric.unit
    metric_list = "\n".join(
        f"- {name}" + (f" [{units[name]}]" if name in units else "") for name in all_names
    )
    system, user = prompts.render(
        "select_metrics",
        metric_list=metric_list,
        summary=summary.text or "(empty)",
        hypotheses=_hypotheses_json(hypotheses),
    )
    response = provider.complete(single_turn(system, user, temperature=SELECTOR_TEMPERATURE))
    degraded = False
    chosen: list[str] = []
    try:
        parsed = last_json_block(response.content)
        raw = parsed.get("metric_names") if isinstance(parsed, dict) else None
        if not isinstance(raw, list):
            raise ParseFailure("metric selection must contain a metric_names list")
        valid = set(all_names)
        seen = set()
        for name in raw:
            if isinstance(name, str) and name in valid and name not in seen:
                chosen.append(name)
                seen.add(name)
    except ParseFailure:
        degraded = True
    if not chosen:
        chosen = all_names
        degraded = True
    return chosen, RoleOutput("select_metrics", response.content, parsed=chosen, degraded=degraded)


def _render_profiles_block(selected: list[KernelProfile], metric_names: list[str]) -> str:
    blocks = []
    wanted = set(metric_names)
    for profile in selected:
        knobs = ", ".join(f"{k}={v}" for k, v in profile.config.knobs.items()) or "defaults"
        lines = [f"## Profile {profile.id} (arch={profile.config.gpu_arch}; {knobs})"]
        for name, metric in profile.metrics.items():
            if name in wanted:
                unit = f" {metric.unit}" if metric.unit else ""
                lines.append(f"  {name} = {metric.value}{unit}")
        if profile.line_records:
            lines.append("  Line-level hotspots:")
            for rec in profile.line_records[:20]:
                vals = ", ".join(f"{k}={v}" for k, v in rec.metrics.items())
                lines.append(f"    {rec.file}:{rec.line} ({vals})")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def _render_sources(sources: list[SourceFile], budget: int) -> str:
    parts = []
    spent = 0
    for src in sources:
        header = f"// ==== {src.path} ====\n"
        room = budget - spent
        if room <= 0:
            parts.append(f"// ==== {src.path} ==== (omitted: source budget exhausted)")
            continue
        body = src.content
        if len(body) > room:
            body = body[:room] + "\n// ... (truncated: source budget exhausted)"
        spent += len(body)
        parts.append(header + body)
    return "\n\n".join(parts)


def resolve_pass_citations(
    citations: list[MetricCitation],
    selected: list[KernelProfile],
    metric_names: list[str],
) -> tuple[tuple[MetricCitation, ...], tuple[MetricCitation, ...]]:
    """Split citations into (all retained, flagged-unresolvable) for a pass.

    A citation resolves within a pass when it names a selected profile, a
    metric selected for the pass, and the metric exists in that profile's
    table. Decided purely from the data, no LLM involved.
    """
    by_id = {p.id: p for p in selected}
    wanted = set(metric_names)
    flagged = []
    for cit in citations:
        profile = by_id.get(cit.profile_id)
        if profile is None or cit.metric_name not in wanted or cit.metric_name not in profile.metrics:
            flagged.append(cit)
    return tuple(citations), tuple(flagged)


def analyze_profiles(
    pass_index: int,
    selected: list[KernelProfile],
    metric_names: list[str],
    summary: AlgorithmSummary,
    sources: list[SourceFile],
    guidelines: str,
    hypotheses: HypothesisSet,
    provider: Provider,
    source_budget: int = 24000,
) -> tuple[AnalysisPass, RoleOutput]:
    """Produce one analysis pass over the selected profiles and metrics.

    Citations are parsed from the inline citation syntax; unresolvable ones
    are retained on the pass but flagged.
    """
    if not metric_names:
        raise ValueError("analyze_profiles requires a non-empty metric selection")
    system, user = prompts.render(
        "analyze",
        guidelines=guidelines,
        summary=summary.text or "(empty)",
        hypotheses=_hypotheses_json(hypotheses),
        sources=_render_sources(sources, source_budget),
        profiles_block=_render_profiles_block(selected, metric_names),
    )
    response = provider.complete(single_turn(system, user))
    citations, flagged = resolve_pass_citations(
        extract_citations(response.content), selected, metric_names
    )
    if flagged:
        logger.warning("pass %d: %d citation(s) do not resolve against the selection",
                       pass_index, len(flagged))
    result = AnalysisPass(
        pass_index=pass_index,
        selected_profile_ids=tuple(p.id for p in selected),
        selected_metric_names=tuple(metric_names),
        analysis_text=response.content,
        citations=citations,
        flagged_citations=flagged,
    )
    return result, RoleOutput(
        "analyze_profiles",
        response.content,
        parsed={
            "pass_index": pass_index,
            "profiles": list(result.selected_profile_ids),
            "metrics": list(result.selected_metric_names),
            "citations": [
                {"profile": c.profile_id, "metric": c.metric_name, "value": c.quoted_value}
                for c in citations
            ],
            "flagged_citations": [
                {"profile": c.profile_id, "metric": c.metric_name, "value": c.quoted_value}
                for c in flagged
            ],
            "suggestions": [s.title for s in extract_suggestions(response.content)],
        },
    )


def evaluate_drgpu(
    analysis: AnalysisPass, drgpu_report: str, provider: Provider
) -> tuple[AnalysisPass, RoleOutput]:
    """Fold useful rule-based analyzer suggestions into the pass.

    Adopted suggestions are appended to the pass's suggestion block with a
    provenance note naming what was adopted and rejected. Parse failure
    leaves the pass unchanged (degraded).
    """
    system, user = prompts.render(
        "drgpu_evaluate", analysis=analysis.analysis_text, drgpu_report=drgpu_report
    )
    response = provider.complete(single_turn(system, user))
    try:
        parsed = last_json_block(response.content)
        if not isinstance(parsed, dict):
            raise ParseFailure("adoption verdict must be a JSON object")
        adopt_raw = parsed.get("adopt", [])
        reject_raw = parsed.get("reject", [])
        if not isinstance(adopt_raw, list) or not isinstance(reject_raw, list):
            raise ParseFailure("adopt/reject must be lists")
    except ParseFailure:
        logger.warning("rule-suggestion evaluator output unparseable; pass unchanged")
        return analysis, RoleOutput("evaluate_drgpu", response.content, parsed=None, degraded=True)

    adopted = [
        (str(e.get("title", "")).strip(), str(e.get("rationale", "")).strip())
        for e in adopt_raw
        if isinstance(e, dict) and str(e.get("title", "")).strip()
    ]
    rejected = [str(r) for r in reject_raw if isinstance(r, str)]
    if adopted:
        lines = [f"SUGGESTION: {title} :: {rationale or 'adopted from rule-based analyzer'}"
                 for title, rationale in adopted]
        note = (
            f"(external analyzer: adopted {len(adopted)} suggestion(s)"
            + (f"; rejected: {'; '.join(rejected)}" if rejected else "")
            + ")"
        )
        analysis = replace(
            analysis,
            analysis_text=analysis.analysis_text
            + "\n\nAdopted rule-based analyzer suggestions:\n"
            + "\n".join(lines)
            + "\n"
            + note,
        )
    return analysis, RoleOutput(
        "evaluate_drgpu",
        response.content,
        parsed={"adopted": [t for t, _ in adopted], "rejected": rejected},
    )


# --- aggregation and review -----------------------------------------------------

def union_pass_suggestions(passes: list[AnalysisPass]) -> tuple[Suggestion, ...]:
    out: list[Suggestion] = []
    seen = set()
    for p in passes:
        for s in extract_suggestions(p.analysis_text):
            key = s.title.strip().lower()
            if key not in seen:
                seen.add(key)
                out.append(s)
    return tuple(out)


def union_resolvable_citations(passes: list[AnalysisPass]) -> tuple[MetricCitation, ...]:
    out: list[MetricCitation] = []
    seen = set()
    for p in passes:
        flagged = set(p.flagged_citations)
        for c in p.citations:
            if c in flagged or c in seen:
                continue
            seen.add(c)
            out.append(c)
    return tuple(out)


def _fallback_report(passes: list[AnalysisPass]) -> ExplanationReport:
    ids = sorted({pid for p in passes for pid in p.selected_profile_ids})
    return ExplanationReport(
        summary_section=(
            f"Aggregation fallback: combined {len(passes)} analysis pass(es) over "
            f"profiles {', '.join(ids)}. Per-pass analyses follow verbatim."
        ),
        bottleneck_sections=tuple(
            f"Pass {p.pass_index} (profiles {', '.join(p.selected_profile_ids)}):\n{p.analysis_text}"
            for p in passes
        ),
        knob_analysis=None,
        suggestions=union_pass_suggestions(passes),
        citations=union_resolvable_citations(passes),
        provenance=tuple(p.pass_index for p in passes),
    )


def aggregate_analyses(
    passes: list[AnalysisPass],
    summary: AlgorithmSummary,
    guidelines: str,
    provider: Provider,
) -> tuple[ExplanationReport, RoleOutput]:
    """Combine all passes into the final explanation report.

    Regardless of model output, provenance covers every pass and the citation
    list is the union of resolvable pass citations. A parse failure degrades
    to a deterministic report assembled from the passes themselves.
    """
    if not passes:
        raise ValueError("aggregate_analyses requires at least one pass")
    passes_block = "\n\n".join(
        f"### Pass {p.pass_index} (profiles: {', '.join(p.selected_profile_ids)}; "
        f"metrics: {', '.join(p.selected_metric_names)})\n{p.analysis_text}"
        for p in passes
    )
    system, user = prompts.render(
        "aggregate",
        guidelines=guidelines,
        summary=summary.text or "(empty)",
        passes_block=passes_block,
    )
    response = provider.complete(single_turn(system, user))
    degraded = False
    try:
        parsed = last_json_block(response.content)
        if not isinstance(parsed, dict) or not isinstance(parsed.get("summary"), str):
            raise ParseFailure("aggregate output must be an object with a summary")
        bottlenecks = tuple(
            s for s in parsed.get("bottlenecks", []) if isinstance(s, str) and s.strip()
        )
        knob_analysis = parsed.get("knob_analysis")
        if not isinstance(knob_analysis, str) or not knob_analysis.strip():
            knob_analysis = None
        suggestions = []
        for entry in parsed.get("suggestions", []):
            if isinstance(entry, dict) and str(entry.get("title", "")).strip():
                refs_raw = entry.get("code_refs", [])
                refs = tuple(str(r) for r in refs_raw) if isinstance(refs_raw, list) else ()
                suggestions.append(
                    Suggestion(
                        title=str(entry["title"]).strip(),
                        rationale=str(entry.get("rationale", "")).strip(),
                        code_refs=refs,
                    )
                )
        if not suggestions:
            # Suggestions may be empty only if no pass carries a suggestion block.
            suggestions = list(union_pass_suggestions(passes))
        report = ExplanationReport(
            summary_section=parsed["summary"].strip(),
            bottleneck_sections=bottlenecks,
            knob_analysis=knob_analysis,
            suggestions=tuple(suggestions),
            citations=union_resolvable_citations(passes),
            provenance=tuple(p.pass_index for p in passes),
        )
    except ParseFailure:
        logger.warning("aggregator output unparseable; falling back to verbatim pass report")
        report = _fallback_report(passes)
        degraded = True
    return report, RoleOutput(
        "aggregate_analyses",
        response.content,
        parsed={
            "summary": report.summary_section,
            "bottlenecks": list(report.bottleneck_sections),
            "knob_analysis": report.knob_analysis,
            "suggestions": [s.title for s in report.suggestions],
            "provenance": list(report.provenance),
        },
        degraded=degraded,
    )


_VERDICTS = {
    "confirmed": HypothesisStatus.CONFIRMED,
    "refuted": HypothesisStatus.REFUTED,
    "inconclusive": HypothesisStatus.INCONCLUSIVE,
}


def review_explanation(
    report_text: str, hypotheses: HypothesisSet, provider: Provider
) -> tuple[HypothesisSet, ReviewReport, RoleOutput | None]:
    """Judge every hypothesis against the final report.

    Every hypothesis ends with exactly one of confirmed/refuted/inconclusive;
    anything the reviewer fails to address (or addresses unparseably) becomes
    inconclusive. An empty hypothesis set short-circuits to an empty review
    without an LLM call.
    """
    if not hypotheses:
        return hypotheses, ReviewReport(), None
    system, user = prompts.render(
        "review", report_text=report_text, hypotheses_json=_hypotheses_json(hypotheses)
    )
    response = provider.complete(single_turn(system, user, temperature=SELECTOR_TEMPERATURE))
    entries: dict[str, tuple[HypothesisStatus, str]] = {}
    degraded = False
    try:
        parsed = last_json_block(response.content)
        if not isinstance(parsed, list):
            raise ParseFailure("review must be a JSON array")
        for entry in parsed:
            if not isinstance(entry, dict):
                continue
            hid = entry.get("id")
            verdict = _VERDICTS.get(str(entry.get("verdict", "")).strip().lower())
            if isinstance(hid, str) and verdict is not None:
                entries[hid] = (verdict, str(entry.get("note", "")))
    except ParseFailure:
        degraded = True

    verdicts = []
    updated = []
    for h in hypotheses:
        status, note = entries.get(h.id, (HypothesisStatus.INCONCLUSIVE, "not addressed by reviewer"))
        verdicts.append(ReviewVerdict(hypothesis_id=h.id, verdict=status, note=note))
        updated.append(h.with_status(status))
    review = ReviewReport(verdicts=tuple(verdicts), text=response.content)
    return tuple(updated), review, RoleOutput(
        "review_explanation",
        response.content,
        parsed=[{"id": v.hypothesis_id, "verdict": v.verdict.value} for v in verdicts],
        degraded=degraded,
    )

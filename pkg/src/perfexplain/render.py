"""Deterministic markdown rendering for reports and reviews.

No timestamps, no absolute paths: replaying the same cassette must produce
byte-identical files.
"""

from __future__ import annotations

from .model import ExplanationReport, ReviewReport


def report_markdown(report: ExplanationReport, warnings: tuple[str, ...] = ()) -> str:
    lines: list[str] = ["# Kernel performance explanation", ""]
    for warning in warnings:
        lines.append(f"> WARNING: {warning}")
    if warnings:
        lines.append("")

    lines += ["## Summary", "", report.summary_section.strip(), ""]

    if report.bottleneck_sections:
        lines += ["## Bottlenecks", ""]
        for i, section in enumerate(report.bottleneck_sections, 1):
            lines += [f"### Bottleneck {i}", "", section.strip(), ""]

    if report.knob_analysis:
        lines += ["## Tuning knobs", "", report.knob_analysis.strip(), ""]

    lines += ["## Suggested optimizations", ""]
    if report.suggestions:
        for i, s in enumerate(report.suggestions, 1):
            refs = f" (refs: {', '.join(s.code_refs)})" if s.code_refs else ""
            rationale = f" {s.rationale.strip()}" if s.rationale.strip() else ""
            lines.append(f"{i}. **{s.title.strip()}**:{rationale}{refs}")
    else:
        lines.append("(none)")
    lines.append("")

    if report.citations:
        lines += ["## Cited metric values", ""]
        for c in report.citations:
            lines.append(f"- `{c.metric_name}` = {c.quoted_value} (profile `{c.profile_id}`)")
        lines.append("")

    passes = ", ".join(str(i) for i in report.provenance)
    lines += ["## Provenance", "", f"Aggregated from analysis pass(es): {passes}.", ""]
    return "\n".join(lines)


def review_markdown(review: ReviewReport) -> str:
    lines = ["# Hypothesis review", ""]
    if not review.verdicts:
        lines += ["No hypotheses were recorded for this run.", ""]
        return "\n".join(lines)
    for v in review.verdicts:
        note = f" {v.note.strip()}" if v.note.strip() else ""
        lines.append(f"- `{v.hypothesis_id}`: **{v.verdict.value}**.{note}")
    lines.append("")
    return "\n".join(lines)

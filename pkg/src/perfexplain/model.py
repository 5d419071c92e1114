"""Canonical data types shared by ingestion, the agent pipeline, and evaluation.

Every type here is an immutable value object with no I/O. Invariants are not
enforced in constructors: real profiler exports are messy, and a bundle must be
representable in order to be diagnosed. `validate_bundle` reports violations
as data.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Union

KnobValue = Union[float, int, str]

METRIC_KINDS = ("counter", "ratio", "percent", "text")


class HypothesisStatus(str, Enum):
    PENDING = "pending"
    CONFIRMED = "confirmed"
    REFUTED = "refuted"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class MetricValue:
    """One profiler metric: name, value (numeric or verbatim text), unit, kind.

    ``unchecked`` marks percent values outside [0, 100] that ingestion kept
    as-is (profilers emit burst ratios above 100%); the range invariant is
    advisory for those.
    """

    name: str
    value: float | str
    unit: str | None = None
    kind: str = "counter"
    unchecked: bool = False

    @property
    def is_numeric(self) -> bool:
        return isinstance(self.value, (int, float))


@dataclass(frozen=True)
class RunConfig:
    """Tuning-knob settings and architecture tag identifying one profile."""

    profile_id: str
    gpu_arch: str
    knobs: dict[str, KnobValue] = field(default_factory=dict)


@dataclass(frozen=True)
class LineRecord:
    """Line-level metric values for one (file, line) location.

    ``external`` marks records whose file is not part of the bundle source
    tree (e.g. a system header).
    """

    file: str
    line: int
    metrics: dict[str, float] = field(default_factory=dict)
    external: bool = False


@dataclass(frozen=True)
class KernelProfile:
    """One profiled kernel launch: metric table plus its run configuration."""

    id: str
    kernel_name: str
    app_name: str
    config: RunConfig
    metrics: dict[str, MetricValue] = field(default_factory=dict)
    line_records: tuple[LineRecord, ...] | None = None

    def metric_names(self) -> list[str]:
        return list(self.metrics.keys())


@dataclass(frozen=True)
class SourceFile:
    path: str
    content: str

    @property
    def sloc(self) -> int:
        return sum(1 for ln in self.content.splitlines() if ln.strip())


@dataclass(frozen=True)
class KnobDecl:
    """Declared tuning knob: name, numeric or categorical, optional unit."""

    name: str
    type: str  # "numeric" | "categorical"
    unit: str | None = None


@dataclass(frozen=True)
class BundleManifest:
    app_name: str
    kernel_name: str
    knobs: tuple[KnobDecl, ...] = ()
    defaults: dict[str, KnobValue] = field(default_factory=dict)

    def knob_names(self) -> set[str]:
        return {k.name for k in self.knobs}


@dataclass(frozen=True)
class ProfileBundle:
    """Container for one kernel's profiles, sources, and descriptive metadata."""

    manifest: BundleManifest
    profiles: tuple[KernelProfile, ...]
    sources: tuple[SourceFile, ...]
    guidelines: str | None = None

    def profile_ids(self) -> list[str]:
        return [p.id for p in self.profiles]

    def source_paths(self) -> list[str]:
        return [s.path for s in self.sources]

    def profile_by_id(self, profile_id: str) -> KernelProfile | None:
        for p in self.profiles:
            if p.id == profile_id:
                return p
        return None


@dataclass(frozen=True)
class AlgorithmSummary:
    text: str
    files_covered: frozenset[str] = frozenset()


@dataclass(frozen=True)
class PerformanceHypothesis:
    """A pre-data prediction about kernel behavior.

    Status stays pending until the explanation reviewer runs; only the
    reviewer assigns confirmed/refuted/inconclusive.
    """

    id: str
    statement: str
    code_refs: tuple[tuple[str, str], ...] = ()  # (file, "start-end")
    status: HypothesisStatus = HypothesisStatus.PENDING

    def with_status(self, status: HypothesisStatus) -> "PerformanceHypothesis":
        return replace(self, status=status)


HypothesisSet = tuple[PerformanceHypothesis, ...]


@dataclass(frozen=True)
class MetricCitation:
    """An inline reference to a profiled metric value, quoted verbatim."""

    profile_id: str
    metric_name: str
    quoted_value: str


@dataclass(frozen=True)
class AnalysisPass:
    """One profile-inspection iteration over selected profiles and metrics.

    ``citations`` holds every citation parsed from the analysis text;
    ``flagged_citations`` is the subset that does not resolve against the
    bundle (retained for review, excluded from report citation lists).
    """

    pass_index: int
    selected_profile_ids: tuple[str, ...]
    selected_metric_names: tuple[str, ...]
    analysis_text: str
    citations: tuple[MetricCitation, ...] = ()
    flagged_citations: tuple[MetricCitation, ...] = ()


@dataclass(frozen=True)
class Suggestion:
    title: str
    rationale: str
    code_refs: tuple[str, ...] = ()


@dataclass(frozen=True)
class ExplanationReport:
    """The aggregated final report with metric citations and provenance."""

    summary_section: str
    bottleneck_sections: tuple[str, ...] = ()
    knob_analysis: str | None = None
    suggestions: tuple[Suggestion, ...] = ()
    citations: tuple[MetricCitation, ...] = ()
    provenance: tuple[int, ...] = ()


@dataclass(frozen=True)
class ReviewVerdict:
    hypothesis_id: str
    verdict: HypothesisStatus
    note: str = ""


@dataclass(frozen=True)
class ReviewReport:
    verdicts: tuple[ReviewVerdict, ...] = ()
    text: str = ""


@dataclass(frozen=True)
class EvalOutcome:
    """Per-attempt record for the MCQ/OPT downstream tasks."""

    task: str  # "mcq" | "opt"
    attempt_index: int
    status: str  # "valid" | "build_fail" | "test_fail" | "retry_exhausted"
    score: float | None = None
    speedup: float | None = None
    retries_used: int = 0
    technique_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.task == "mcq" and self.speedup is not None:
            raise ValueError("mcq outcomes carry no speedup")
        if self.task == "opt":
            if self.score is not None:
                raise ValueError("opt outcomes carry no score")
            if (self.status == "valid") != (self.speedup is not None):
                raise ValueError("opt outcomes carry a speedup iff status is valid")


def _validate_manifest(manifest: BundleManifest, out: list[str]) -> None:
    if not manifest.app_name:
        out.append("manifest: app_name is empty")
    if not manifest.kernel_name:
        out.append("manifest: kernel_name is empty")
    seen: set[str] = set()
    for decl in manifest.knobs:
        if decl.name in seen:
            out.append(f"manifest: knob {decl.name!r} declared twice")
        seen.add(decl.name)
        if decl.type not in ("numeric", "categorical"):
            out.append(f"manifest: knob {decl.name!r} has unknown type {decl.type!r}")
        if decl.name not in manifest.defaults:
            out.append(f"manifest: knob {decl.name!r} has no default")
    for name in manifest.defaults:
        if name != "gpu_arch" and name not in seen:
            out.append(f"manifest: default for undeclared knob {name!r}")


def _validate_profile(profile: KernelProfile, manifest: BundleManifest, out: list[str]) -> None:
    if profile.id != profile.config.profile_id:
        out.append(
            f"profile {profile.id!r}: id does not match config.profile_id "
            f"{profile.config.profile_id!r}"
        )
    if not profile.metrics:
        out.append(f"profile {profile.id!r}: metric table is empty")
    declared = manifest.knob_names()
    by_name = {k.name: k for k in manifest.knobs}
    for knob, value in profile.config.knobs.items():
        if knob not in declared:
            out.append(f"profile {profile.id!r}: knob {knob!r} not in manifest knob schema")
            continue
        if by_name[knob].type == "numeric" and not isinstance(value, (int, float)):
            out.append(f"profile {profile.id!r}: numeric knob {knob!r} has non-numeric value {value!r}")
        if by_name[knob].type == "categorical" and not isinstance(value, str):
            out.append(f"profile {profile.id!r}: categorical knob {knob!r} has non-string value {value!r}")
    for name, metric in profile.metrics.items():
        if not name:
            out.append(f"profile {profile.id!r}: metric with empty name")
        if name != metric.name:
            out.append(f"profile {profile.id!r}: metric table key {name!r} != metric name {metric.name!r}")
        if metric.kind not in METRIC_KINDS:
            out.append(f"profile {profile.id!r}: metric {name!r} has unknown kind {metric.kind!r}")
        if (
            metric.kind == "percent"
            and metric.is_numeric
            and not metric.unchecked
            and not (0.0 <= float(metric.value) <= 100.0)
        ):
            out.append(
                f"profile {profile.id!r}: percent metric {name!r} value {metric.value} "
                "outside [0, 100] and not flagged unchecked"
            )


def validate_bundle(bundle: ProfileBundle) -> list[str]:
    """Check every type invariant; return one description per violation.

    Pure: the same bundle always yields the same list (stable order). An empty
    list means the bundle is well formed. Citation resolution is a separate,
    report-level concern (see pipeline.validate_citations).
    """
    out: list[str] = []
    _validate_manifest(bundle.manifest, out)

    if not bundle.profiles:
        out.append("bundle: no profiles")
    if not bundle.sources:
        out.append("bundle: no source files")

    seen_ids: set[str] = set()
    for profile in bundle.profiles:
        if profile.id in seen_ids:
            out.append(f"profile {profile.id!r}: duplicate profile_id")
        seen_ids.add(profile.id)
        _validate_profile(profile, bundle.manifest, out)

    seen_paths: set[str] = set()
    for src in bundle.sources:
        if src.path in seen_paths:
            out.append(f"source {src.path!r}: duplicate path")
        seen_paths.add(src.path)
        if not src.content:
            out.append(f"source {src.path!r}: content is empty")

    for profile in bundle.profiles:
        for rec in profile.line_records or ():
            if rec.line < 1:
                out.append(f"profile {profile.id!r}: line record {rec.file!r} has line {rec.line} < 1")
            if not rec.external and rec.file not in seen_paths:
                out.append(
                    f"profile {profile.id!r}: line record file {rec.file!r} "
                    "not in bundle sources and not marked external"
                )
    return out

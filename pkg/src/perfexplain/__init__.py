"""Explain GPU kernel performance from profiler metric bundles.

A staged agent pipeline (source-code inspection, profile inspection,
aggregation, review) turns per-kernel profiler metric tables plus kernel
source into a grounded natural-language performance report, and an evaluation
harness (score@1, pass@k, speedup@k) measures how much such reports help
downstream models answer questions and optimize code.
"""

from .model import (
    AlgorithmSummary,
    AnalysisPass,
    EvalOutcome,
    ExplanationReport,
    KernelProfile,
    LineRecord,
    MetricCitation,
    MetricValue,
    PerformanceHypothesis,
    ProfileBundle,
    ReviewReport,
    RunConfig,
    SourceFile,
    Suggestion,
    validate_bundle,
)
from .ingest import load_bundle, parse_bundle_json, parse_line_csv, parse_metrics_csv, serialize_bundle_json
from .gateway import (
    Cassette,
    ChatMessage,
    ChatRequest,
    ChatResponse,
    FunctionProvider,
    HttpProvider,
    HttpProviderConfig,
    RecordingProvider,
    ReplayProvider,
    ScriptedProvider,
    request_hash,
)
from .pipeline import (
    PipelineConfig,
    RunResult,
    profile_distances,
    rank_profiles_by_default_distance,
    run_full,
    run_profile_stage,
    run_source_stage,
    validate_citations,
)
from .evalkit import (
    McqQuestion,
    harmonic_mean,
    pass_at_k,
    run_mcq,
    run_opt,
    score_at_1,
    speedup_at_k,
    summarize_results,
)

__version__ = "0.1.0"

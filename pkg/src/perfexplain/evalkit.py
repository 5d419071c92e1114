"""Downstream-task harness and evaluation math.

The estimators:

* ``pass_at_k``: probability that at least one of k uniformly drawn samples
  (without replacement, from n attempts with c valid) is valid. Computed as
  an exact telescoping product over rationals, converted to float once, so
  pass_at_k(n, c, 1) == c/n holds exactly.
* ``speedup_at_k``: expected best speedup over k uniformly drawn distinct
  samples. Samples are sorted ascending first; the j-th order statistic is
  the maximum of a k-subset in C(j-1, k-1) of the C(n, k) subsets.
* ``score_at_1``: mean MCQ score across attempts.

Harness protocol: MCQ shuffles choices attempt-seeded and extracts the answer
from a mandated ``ANSWER: <letter>`` line; OPT feeds build/test logs back to
the model for up to ``max_retries`` retries, measures speedup against the
baseline, and excludes attempts that never produced valid code from speedup@1
(they still count against pass@1).
"""

from __future__ import annotations

import json
import logging
import random
import re
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from math import comb, fsum
from pathlib import Path
from string import Template
from typing import Protocol

from . import prompts
from .errors import DomainError, ExecutorFailure, GatewayError, ParseFailure
from .gateway import ChatMessage, ChatRequest, Provider, single_turn
from .model import EvalOutcome
from .roles import FENCED_BLOCK_RE, RoleOutput, last_json_block

logger = logging.getLogger(__name__)


# --- estimators -------------------------------------------------------------

def pass_at_k(n: int, c: int, k: int) -> float:
    """1 - C(n-c, k) / C(n, k), exact until the final float conversion."""
    if not (isinstance(n, int) and isinstance(c, int) and isinstance(k, int)):
        raise DomainError("pass_at_k requires integer arguments")
    if not (0 <= c <= n):
        raise DomainError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not (1 <= k <= n):
        raise DomainError(f"need 1 <= k <= n, got k={k}, n={n}")
    if n - c < k:
        return 1.0
    miss_all = Fraction(1)
    for i in range(k):
        miss_all *= Fraction(n - c - i, n - i)
    return float(1 - miss_all)


def speedup_at_k(speedups: list[float], k: int) -> float:
    """Expected maximum speedup over k distinct uniformly chosen samples.

    Sorts ascending and weights the j-th smallest sample by
    C(j-1, k-1) / C(n, k).
    """
    n = len(speedups)
    if n == 0:
        raise DomainError("speedup_at_k requires at least one sample")
    if any(s <= 0 for s in speedups):
        raise DomainError("speedups must be positive")
    if not (1 <= k <= n):
        raise DomainError(f"need 1 <= k <= n, got k={k}, n={n}")
    ordered = sorted(speedups)
    denom = comb(n, k)
    return fsum(comb(j - 1, k - 1) * s for j, s in enumerate(ordered, start=1)) / denom


def score_at_1(attempt_scores: list[float]) -> float:
    """Mean score across attempts (each in [0, 1])."""
    if not attempt_scores:
        raise DomainError("score_at_1 requires at least one attempt score")
    if any(not (0.0 <= s <= 1.0) for s in attempt_scores):
        raise DomainError("attempt scores must lie in [0, 1]")
    return fsum(attempt_scores) / len(attempt_scores)


def harmonic_mean(values: list[float]) -> float:
    if not values:
        raise DomainError("harmonic_mean requires at least one value")
    if any(v <= 0 for v in values):
        raise DomainError("harmonic_mean requires positive values")
    return len(values) / fsum(1.0 / v for v in values)


# --- MCQ task ---------------------------------------------------------------

@dataclass(frozen=True)
class McqQuestion:
    question: str
    correct_choices: tuple[str, ...]
    incorrect_choices: tuple[str, ...]


def load_mcq_questions(text: str) -> list[McqQuestion]:
    """Parse the MCQ file: a JSON array of {question, correct_choices,
    incorrect_choices} objects (exact field names)."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError(f"MCQ file is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise DomainError("MCQ file must be a JSON array")
    out = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise DomainError(f"questions[{i}] must be an object")
        for key in ("question", "correct_choices", "incorrect_choices"):
            if key not in entry:
                raise DomainError(f"questions[{i}] missing {key!r}")
        out.append(
            McqQuestion(
                question=str(entry["question"]),
                correct_choices=tuple(str(c) for c in entry["correct_choices"]),
                incorrect_choices=tuple(str(c) for c in entry["incorrect_choices"]),
            )
        )
    return out


def validate_mcq_questions(questions: list[McqQuestion]) -> tuple[list[str], list[str]]:
    """Returns (violations, warnings); multi-correct questions warn only."""
    violations, warnings = [], []
    for i, q in enumerate(questions):
        if not q.question.strip():
            violations.append(f"questions[{i}]: empty question text")
        if not q.correct_choices:
            violations.append(f"questions[{i}]: correct_choices is empty")
        if not q.incorrect_choices:
            violations.append(f"questions[{i}]: incorrect_choices is empty")
        all_choices = list(q.correct_choices) + list(q.incorrect_choices)
        if len(set(all_choices)) != len(all_choices):
            violations.append(f"questions[{i}]: choice texts are not pairwise distinct")
        if len(q.correct_choices) > 1:
            warnings.append(
                f"questions[{i}]: {len(q.correct_choices)} correct choices; "
                "scored as 'any correct choice'"
            )
    return violations, warnings


_ANSWER_RE = re.compile(r"^\s*ANSWER:\s*([A-Za-z])\b", re.MULTILINE)

LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


def parse_answer_letter(text: str) -> str | None:
    matches = _ANSWER_RE.findall(text)
    return matches[-1].upper() if matches else None


def _shuffled_choices(question: McqQuestion, seed: int, attempt: int, qindex: int) -> list[str]:
    rng = random.Random(f"{seed}:{attempt}:{qindex}")
    choices = list(question.correct_choices) + list(question.incorrect_choices)
    rng.shuffle(choices)
    return choices


def _ask_question(
    question: McqQuestion, qindex: int, context: str, provider: Provider, seed: int, attempt: int
) -> bool:
    choices = _shuffled_choices(question, seed, attempt, qindex)
    block = "\n".join(f"{LETTERS[i]}. {c}" for i, c in enumerate(choices))
    system, user = prompts.render(
        "mcq",
        context=f"Context:\n{context}" if context.strip() else "(no context provided)",
        question=question.question,
        choices_block=block,
    )
    response = provider.complete(single_turn(system, user))
    letter = parse_answer_letter(response.content)
    if letter is None or LETTERS.index(letter) >= len(choices):
        return False
    return choices[LETTERS.index(letter)] in question.correct_choices


def run_mcq(
    questions: list[McqQuestion],
    context_report: str,
    provider: Provider,
    attempts: int = 20,
    seed: int = 0,
    jobs: int = 1,
) -> tuple[list[float | None], float]:
    """Run all questions `attempts` times with attempt-seeded choice order.

    Unparseable answers score 0 for that question; a gateway error marks the
    whole attempt invalid (None) and it is excluded from the mean.
    Returns (per-attempt scores, score@1 over valid attempts).
    """
    if not questions:
        raise DomainError("run_mcq requires at least one question")
    violations, warnings = validate_mcq_questions(questions)
    if violations:
        raise DomainError("; ".join(violations))
    for w in warnings:
        logger.warning("%s", w)

    def one_attempt(attempt: int) -> float | None:
        try:
            correct = sum(
                _ask_question(q, qi, context_report, provider, seed, attempt)
                for qi, q in enumerate(questions)
            )
        except GatewayError as exc:
            logger.warning("attempt %d invalid (gateway error: %s)", attempt, exc)
            return None
        return correct / len(questions)

    indices = range(1, attempts + 1)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(one_attempt, indices))
    else:
        scores = [one_attempt(a) for a in indices]
    valid = [s for s in scores if s is not None]
    if not valid:
        raise DomainError("every MCQ attempt failed at the gateway")
    return scores, score_at_1(valid)


# --- OPT task ---------------------------------------------------------------

@dataclass(frozen=True)
class BuildResult:
    ok: bool
    log: str
    artifact: object | None = None


class OptExecutor(Protocol):
    """Build/test/time contract for optimization attempts.

    ``time`` is only called after ``test`` succeeded and must return seconds
    already averaged over three runs (the averaging policy lives next to the
    measurement).
    """

    def build(self, code: str) -> BuildResult: ...
    def test(self, artifact: object) -> tuple[bool, str]: ...
    def time(self, artifact: object) -> float: ...


def extract_code_block(text: str) -> str | None:
    blocks = FENCED_BLOCK_RE.findall(text)
    return blocks[-1].strip() if blocks else None


def measure_baseline(executor: OptExecutor, kernel_source: str) -> float:
    build = executor.build(kernel_source)
    if not build.ok:
        raise ExecutorFailure("baseline build", build.log)
    ok, log = executor.test(build.artifact)
    if not ok:
        raise ExecutorFailure("baseline test", log)
    return executor.time(build.artifact)


def _report_has_suggestions(context_report: str) -> bool:
    if not context_report.strip():
        return False
    marker = "## Suggested optimizations"
    if marker in context_report:
        tail = context_report.split(marker, 1)[1].strip()
        return not tail.startswith("(none)")
    return True


def _one_opt_attempt(
    attempt: int,
    context_report: str,
    kernel_source: str,
    provider: Provider,
    executor: OptExecutor,
    baseline_time: float,
    max_retries: int,
    has_suggestions: bool,
) -> EvalOutcome:
    instruction = (
        "Implement the optimization suggestions from the analysis report below."
        if has_suggestions
        else "No analysis suggestions are available; identify optimizations yourself."
    )
    system, user = prompts.render(
        "opt",
        suggestion_instruction=instruction,
        context=(f"Analysis report:\n{context_report}" if context_report.strip()
                 else "(no analysis report provided)"),
        source=kernel_source,
    )
    _, retry_template = prompts.load_prompt("opt_retry")
    messages: list[ChatMessage] = [ChatMessage("user", user)]
    last_failure = "build_fail"
    retries_used = 0
    try:
        for try_index in range(max_retries + 1):
            retries_used = try_index
            response = provider.complete(ChatRequest(system_prompt=system, messages=tuple(messages)))
            messages.append(ChatMessage("assistant", response.content))
            code = extract_code_block(response.content)
            if code is None:
                stage, log = "build", "no fenced code block in reply"
            else:
                build = executor.build(code)
                if not build.ok:
                    stage, log = "build", build.log
                else:
                    ok, test_log = executor.test(build.artifact)
                    if not ok:
                        stage, log = "test", test_log
                    else:
                        new_time = executor.time(build.artifact)
                        return EvalOutcome(
                            task="opt",
                            attempt_index=attempt,
                            status="valid",
                            speedup=baseline_time / new_time,
                            retries_used=try_index,
                        )
            last_failure = "build_fail" if stage == "build" else "test_fail"
            if try_index < max_retries:
                messages.append(ChatMessage("user", Template(retry_template).substitute(stage=stage, log=log)))
    except GatewayError as exc:
        logger.warning("opt attempt %d hit a gateway error: %s", attempt, exc)
        return EvalOutcome(task="opt", attempt_index=attempt, status="retry_exhausted",
                           retries_used=retries_used)
    status = last_failure if max_retries == 0 else "retry_exhausted"
    return EvalOutcome(task="opt", attempt_index=attempt, status=status, retries_used=max_retries)


def run_opt(
    context_report: str,
    kernel_source: str,
    provider: Provider,
    executor: OptExecutor,
    attempts: int = 20,
    max_retries: int = 3,
    jobs: int = 1,
    report_has_suggestions: bool | None = None,
) -> list[EvalOutcome]:
    """Run the code-optimization task; one EvalOutcome per attempt.

    The baseline must be measurable (build + test + time on the original
    source) or the whole task aborts with ExecutorFailure. Failed builds and
    tests feed their log back to the model for up to max_retries retries.
    """
    baseline_time = measure_baseline(executor, kernel_source)
    has_suggestions = (
        report_has_suggestions
        if report_has_suggestions is not None
        else _report_has_suggestions(context_report)
    )

    def one(attempt: int) -> EvalOutcome:
        return _one_opt_attempt(
            attempt, context_report, kernel_source, provider, executor,
            baseline_time, max_retries, has_suggestions,
        )

    indices = range(1, attempts + 1)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, indices))
    return [one(a) for a in indices]


# --- result summaries ---------------------------------------------------------

@dataclass(frozen=True)
class ReportMetrics:
    n_attempts: int
    n_valid: int
    pass_at_1: float
    speedup_at_1: float | None  # None: no valid attempt, undefined
    max_speedup: float | None


@dataclass(frozen=True)
class SettingSummary:
    reports: tuple[ReportMetrics, ...]
    harmonic_mean_speedup_at_1: float | None
    overall_max_speedup: float | None


def summarize_report(outcomes: list[EvalOutcome]) -> ReportMetrics:
    if not outcomes:
        raise DomainError("summarize_report requires at least one outcome")
    speedups = [o.speedup for o in outcomes if o.status == "valid" and o.speedup is not None]
    return ReportMetrics(
        n_attempts=len(outcomes),
        n_valid=len(speedups),
        pass_at_1=pass_at_k(len(outcomes), len(speedups), 1),
        speedup_at_1=speedup_at_k(speedups, 1) if speedups else None,
        max_speedup=max(speedups) if speedups else None,
    )


def summarize_results(outcomes_per_report: list[list[EvalOutcome]]) -> SettingSummary:
    """Per-report metrics plus the cross-report harmonic mean and overall max.

    Non-valid attempts are excluded from speedup@1 (they only lower pass@1);
    a report with no valid attempts has speedup@1 undefined and is excluded
    from the harmonic mean.
    """
    if not outcomes_per_report:
        raise DomainError("summarize_results requires at least one report")
    reports = tuple(summarize_report(outcomes) for outcomes in outcomes_per_report)
    defined = [r.speedup_at_1 for r in reports if r.speedup_at_1 is not None]
    maxima = [r.max_speedup for r in reports if r.max_speedup is not None]
    return SettingSummary(
        reports=reports,
        harmonic_mean_speedup_at_1=harmonic_mean(defined) if defined else None,
        overall_max_speedup=max(maxima) if maxima else None,
    )


def summary_to_dict(summary: SettingSummary) -> dict:
    return {
        "reports": [
            {
                "n_attempts": r.n_attempts,
                "n_valid": r.n_valid,
                "pass_at_1": r.pass_at_1,
                "speedup_at_1": r.speedup_at_1,
                "max_speedup": r.max_speedup,
            }
            for r in summary.reports
        ],
        "harmonic_mean_speedup_at_1": summary.harmonic_mean_speedup_at_1,
        "overall_max_speedup": summary.overall_max_speedup,
    }


# --- technique labeling ---------------------------------------------------------

def label_techniques(
    code_diff: str, llm_self_report: str, provider: Provider
) -> tuple[list[str], RoleOutput | None]:
    """Label the optimization techniques a diff applied, from a closed taxonomy.

    Unknown labels are dropped by the clamp; parse failure yields an empty,
    degraded result. An empty diff is trivially unlabeled (no LLM call).
    """
    if not code_diff.strip():
        return [], None
    taxonomy = prompts.technique_taxonomy()
    system, user = prompts.render(
        "label_techniques",
        taxonomy="\n".join(f"- {t}" for t in taxonomy),
        diff=code_diff,
        self_report=llm_self_report.strip() or "(none)",
    )
    response = provider.complete(single_turn(system, user, temperature=0.0))
    try:
        parsed = last_json_block(response.content)
        if not isinstance(parsed, list):
            raise ParseFailure("labels must be a JSON array")
    except ParseFailure:
        return [], RoleOutput("label_techniques", response.content, parsed=None, degraded=True)
    by_lower = {t.lower(): t for t in taxonomy}
    labels = []
    for entry in parsed:
        if isinstance(entry, str) and entry.strip().lower() in by_lower:
            label = by_lower[entry.strip().lower()]
            if label not in labels:
                labels.append(label)
    return labels, RoleOutput("label_techniques", response.content, parsed=labels)


# --- command-backed executor ------------------------------------------------------

@dataclass(frozen=True)
class CommandExecutorConfig:
    """External build/test/time commands with workspace substitution.

    Templates may reference ``{workspace}`` and ``{source}``. ``time_cmd``
    must print a single float (seconds), already the mean of three runs.
    """

    build_cmd: str
    test_cmd: str
    time_cmd: str
    source_filename: str = "kernel.cu"
    timeout: float = 600.0

    @classmethod
    def from_toml(cls, path: str | Path) -> "CommandExecutorConfig":
        import tomli

        data = tomli.loads(Path(path).read_text(encoding="utf-8"))
        executor = data.get("executor", data)
        try:
            return cls(
                build_cmd=executor["build_cmd"],
                test_cmd=executor["test_cmd"],
                time_cmd=executor["time_cmd"],
                source_filename=executor.get("source_filename", "kernel.cu"),
                timeout=float(executor.get("timeout", 600.0)),
            )
        except KeyError as exc:
            raise DomainError(f"executor config missing {exc.args[0]!r}") from exc


class CommandExecutor:
    """Runs configured shell commands in an isolated workspace per build."""

    def __init__(self, config: CommandExecutorConfig, workdir_base: str | Path | None = None):
        self.config = config
        self._base = Path(workdir_base) if workdir_base else None

    def _run(self, template: str, workspace: Path) -> tuple[int, str]:
        source = workspace / self.config.source_filename
        argv = [
            part.format(workspace=str(workspace), source=str(source))
            for part in shlex.split(template)
        ]
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, cwd=workspace,
                timeout=self.config.timeout, check=False,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            return 1, str(exc)
        return proc.returncode, (proc.stdout + proc.stderr)

    def build(self, code: str) -> BuildResult:
        workspace = Path(tempfile.mkdtemp(prefix="opt-attempt-", dir=self._base))
        (workspace / self.config.source_filename).write_text(code, encoding="utf-8")
        rc, log = self._run(self.config.build_cmd, workspace)
        return BuildResult(ok=rc == 0, log=log, artifact=workspace if rc == 0 else None)

    def test(self, artifact: object) -> tuple[bool, str]:
        rc, log = self._run(self.config.test_cmd, Path(str(artifact)))
        return rc == 0, log

    def time(self, artifact: object) -> float:
        rc, log = self._run(self.config.time_cmd, Path(str(artifact)))
        if rc != 0:
            raise ExecutorFailure("time", log)
        try:
            return float(log.strip().splitlines()[-1])
        except (ValueError, IndexError) as exc:
            raise ExecutorFailure("time", f"time_cmd must print a single float, got: {log!r}") from exc

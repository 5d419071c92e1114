"""Exception types shared across the package.

Data-shaped problems (bundle invariant violations, citation findings) are
returned as values, not raised; these classes cover genuinely exceptional
conditions: unreadable inputs, transport failures, contract violations.
"""

from __future__ import annotations


class PerfExplainError(Exception):
    """Base class for all package errors."""


# --- ingest -----------------------------------------------------------------

class IngestError(PerfExplainError):
    pass


class MissingManifest(IngestError):
    def __init__(self, directory: str):
        super().__init__(f"no manifest.json in {directory}")
        self.directory = directory


class ManifestSchema(IngestError):
    def __init__(self, violation: str):
        super().__init__(f"manifest schema violation: {violation}")
        self.violation = violation


class ProfileParse(IngestError):
    def __init__(self, file: str, line: int, reason: str):
        super().__init__(f"{file}:{line}: {reason}")
        self.file = file
        self.line = line
        self.reason = reason


class UnreadableSource(IngestError):
    def __init__(self, path: str, reason: str = ""):
        super().__init__(f"unreadable source {path}" + (f": {reason}" if reason else ""))
        self.path = path


class CsvSyntax(IngestError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"CSV syntax error at line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateMetric(IngestError):
    def __init__(self, name: str):
        super().__init__(f"duplicate metric row: {name}")
        self.name = name


class NonPositiveLine(IngestError):
    def __init__(self, row: int, value: object):
        super().__init__(f"row {row}: line number must be >= 1, got {value!r}")
        self.row = row
        self.value = value


class JsonSyntax(IngestError):
    def __init__(self, reason: str):
        super().__init__(f"bundle JSON is not valid JSON: {reason}")
        self.reason = reason


class SchemaViolation(IngestError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


# --- llm gateway ------------------------------------------------------------

class GatewayError(PerfExplainError):
    pass


class Transport(GatewayError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"transport failure (status {status})" + (f": {detail}" if detail else ""))
        self.status = status


class RateLimited(GatewayError):
    def __init__(self, retry_after: float | None):
        super().__init__(f"rate limited (retry_after={retry_after})")
        self.retry_after = retry_after


class ContextOverflow(GatewayError):
    def __init__(self, prompt_tokens: int, limit: int):
        super().__init__(f"estimated {prompt_tokens} prompt tokens exceeds context limit {limit}")
        self.prompt_tokens = prompt_tokens
        self.limit = limit


class Refusal(GatewayError):
    def __init__(self, detail: str = "model returned empty content"):
        super().__init__(detail)


class CassetteMiss(GatewayError):
    def __init__(self, request_hash: str):
        super().__init__(f"cassette has no entry for request hash {request_hash}")
        self.request_hash = request_hash


class ScriptExhausted(GatewayError):
    def __init__(self, calls_made: int):
        super().__init__(f"scripted provider exhausted after {calls_made} calls")
        self.calls_made = calls_made


# --- agent roles / adapters -------------------------------------------------

class ParseFailure(PerfExplainError):
    """Structured output could not be recovered from model text.

    Roles catch this internally and apply their documented fallback; it only
    escapes when a role has no fallback defined.
    """


class AdapterFailure(PerfExplainError):
    def __init__(self, reason: str):
        super().__init__(f"external analyzer adapter failed: {reason}")
        self.reason = reason


class TreeSchema(PerfExplainError):
    def __init__(self, reason: str):
        super().__init__(f"stall tree schema violation: {reason}")
        self.reason = reason


# --- pipeline ---------------------------------------------------------------

class MissingDefault(PerfExplainError):
    def __init__(self, knob: str):
        super().__init__(f"manifest declares no default for knob {knob!r}")
        self.knob = knob


# --- evaluation -------------------------------------------------------------

class DomainError(PerfExplainError):
    """An evaluation-math precondition was violated."""


class ExecutorFailure(PerfExplainError):
    def __init__(self, stage: str, log: str):
        super().__init__(f"executor failed during {stage}: {log[:500]}")
        self.stage = stage
        self.log = log

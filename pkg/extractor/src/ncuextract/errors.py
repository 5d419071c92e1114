from __future__ import annotations


class ExtractError(Exception):
    pass


class ImportFailure(ExtractError):
    def __init__(self):
        super().__init__(
            "the profiler's Python Report Interface (ncu_report) is not importable. "
            "Add <nsight-compute-install>/extras/python to PYTHONPATH, or set "
            "NCU_PYTHON_PATH to that directory."
        )


class ReportUnreadable(ExtractError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"cannot read report {path}: {reason}")
        self.path = path


class NoMatchingKernel(ExtractError):
    def __init__(self, name: str, path: str):
        super().__init__(f"no kernel launch matching {name!r} in {path}")
        self.name = name
        self.path = path


class ManifestError(ExtractError):
    pass


class LineCsvError(ExtractError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")

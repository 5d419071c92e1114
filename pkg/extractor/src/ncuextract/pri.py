"""Thin access layer over the profiler's Python Report Interface.

Everything the extractor needs from ``ncu_report`` goes through these
functions, so tests can substitute a fake module and version differences stay
contained. The PRI's API stability across profiler versions is undocumented;
the detected version is logged, never enforced.
"""

from __future__ import annotations

import logging
import os
import sys
from typing import Any, Iterator

from .errors import ImportFailure, ReportUnreadable

logger = logging.getLogger(__name__)

DURATION_METRICS = ("gpu__time_duration.sum", "gpu__time_duration")


def load_pri():
    """Import ncu_report; honor NCU_PYTHON_PATH as a search-path hint."""
    if "ncu_report" in sys.modules:
        return sys.modules["ncu_report"]
    extra = os.environ.get("NCU_PYTHON_PATH")
    if extra and extra not in sys.path:
        sys.path.insert(0, extra)
    try:
        import ncu_report  # type: ignore[import-not-found]
    except ImportError as exc:
        raise ImportFailure() from exc
    version = getattr(ncu_report, "__version__", "unknown")
    logger.info("loaded ncu_report (version %s)", version)
    return ncu_report


def open_report(pri, path: str):
    try:
        return pri.load_report(path)
    except Exception as exc:  # the PRI raises plain Exceptions
        raise ReportUnreadable(path, str(exc)) from exc


def iter_actions(report) -> Iterator[Any]:
    """Every profiled kernel launch in the report, in invocation order."""
    for range_index in range(report.num_ranges()):
        launch_range = report.range_by_idx(range_index)
        for action_index in range(launch_range.num_actions()):
            yield launch_range.action_by_idx(action_index)


def action_name(action) -> str:
    # Prefer the demangled form when the PRI exposes name bases.
    base = getattr(action, "NameBase_DEMANGLED", None)
    if base is not None:
        try:
            return action.name(base)
        except TypeError:
            pass
    return action.name()


def metric_value(action, name: str):
    metric = action.metric_by_name(name)
    if metric is None:
        return None
    return metric.value()


def metric_unit(action, name: str) -> str | None:
    metric = action.metric_by_name(name)
    if metric is None:
        return None
    unit = getattr(metric, "unit", None)
    if unit is None:
        return None
    try:
        value = unit()
    except TypeError:
        value = unit
    return value or None


def action_duration(action) -> float | None:
    for name in DURATION_METRICS:
        value = metric_value(action, name)
        if isinstance(value, (int, float)):
            return float(value)
    return None

from __future__ import annotations

import sys
import types
from pathlib import Path

import pytest


class FakeMetric:
    def __init__(self, value, unit=None):
        self._value = value
        self._unit = unit

    def value(self):
        return self._value

    def unit(self):
        return self._unit


class FakeAction:
    NameBase_DEMANGLED = 1

    def __init__(self, name: str, metrics: dict[str, FakeMetric]):
        self._name = name
        self._metrics = metrics

    def name(self, base=None):
        return self._name

    def metric_names(self):
        return list(self._metrics)

    def metric_by_name(self, name):
        return self._metrics.get(name)


class FakeRange:
    def __init__(self, actions: list[FakeAction]):
        self._actions = actions

    def num_actions(self):
        return len(self._actions)

    def action_by_idx(self, index):
        return self._actions[index]


class FakeReport:
    def __init__(self, actions: list[FakeAction]):
        self._range = FakeRange(actions)

    def num_ranges(self):
        return 1

    def range_by_idx(self, index):
        assert index == 0
        return self._range


def make_action(
    kernel="Fan2(float *, float *, float *, int, int)",
    duration=9.0,
    marker=0.0,
    extra: dict | None = None,
) -> FakeAction:
    metrics = {
        "gpu__time_duration.sum": FakeMetric(duration, "us"),
        "sm__throughput": FakeMetric(41.5, "%"),
        "dram__throughput": FakeMetric(1.77, "%"),
        "instance_marker": FakeMetric(marker),
        "profiler__rule_text": FakeMetric("uncoalesced access suspected"),
    }
    metrics.update(extra or {})
    return FakeAction(kernel, metrics)


class FakeNcuReportModule(types.ModuleType):
    """Stands in for the profiler's Python Report Interface."""

    __version__ = "fake-2025.1"

    def __init__(self, reports: dict[str, FakeReport]):
        super().__init__("ncu_report")
        self._reports = reports

    def load_report(self, path):
        name = Path(path).name
        if name not in self._reports:
            raise Exception(f"corrupt or unknown report file: {path}")
        return self._reports[name]


@pytest.fixture()
def fake_pri(monkeypatch):
    """Install a fake ncu_report module; yield it for report registration."""
    module = FakeNcuReportModule({})
    monkeypatch.setitem(sys.modules, "ncu_report", module)
    yield module


@pytest.fixture()
def workspace(tmp_path):
    """Report files on disk (content is opaque), a source tree, a manifest."""
    (tmp_path / "reports").mkdir()
    src = tmp_path / "src"
    src.mkdir()
    (src / "fan2.cu").write_text("__global__ void Fan2() { /* kernel */ }\n", encoding="utf-8")
    manifest = tmp_path / "overrides.json"
    manifest.write_text(
        """{
  "app_name": "gaussian",
  "kernel_name": "Fan2",
  "knobs": [{"name": "block_size", "type": "numeric"}],
  "defaults": {"block_size": 16},
  "profiles": {"run1": {"gpu_arch": "H100", "knobs": {"block_size": 16}}}
}""",
        encoding="utf-8",
    )
    return tmp_path


def add_report(fake_pri, workspace, filename: str, actions) -> Path:
    path = workspace / "reports" / filename
    path.write_bytes(b"\x00NCU-REP-FAKE\x00")
    fake_pri._reports[filename] = FakeReport(actions)
    return path

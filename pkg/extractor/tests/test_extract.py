from __future__ import annotations

import json
import sys
from importlib import resources

import jsonschema
import pytest

from ncuextract.cli import main
from ncuextract.errors import ImportFailure, LineCsvError, NoMatchingKernel, ReportUnreadable
from ncuextract.extract import (
    bundle_schema,
    extract_bundle,
    load_manifest,
    normalize_line_csv,
    select_instance,
)
from ncuextract.pri import load_pri

from conftest import make_action, add_report


def _marker_of(bundle: dict, pid: str) -> float:
    (profile,) = [p for p in bundle["profiles"] if p["id"] == pid]
    (marker,) = [m for m in profile["metrics"] if m["name"] == "instance_marker"]
    return marker["value"]


def _extract(fake_pri, workspace, filenames, lines=None):
    manifest = load_manifest(workspace / "overrides.json")
    reports = [workspace / "reports" / f for f in filenames]
    return extract_bundle(reports, workspace / "src", manifest, lines)


# --- instance selection -------------------------------------------------------

def test_longest_running_instance_selected(fake_pri, workspace):
    add_report(fake_pri, workspace, "run1.ncu-rep", [
        make_action(duration=5.0, marker=1.0),
        make_action(duration=9.0, marker=2.0),
    ])
    bundle = _extract(fake_pri, workspace, ["run1.ncu-rep"])
    assert _marker_of(bundle, "run1") == 2.0


def test_two_equal_instances_take_lower_median(fake_pri, workspace):
    add_report(fake_pri, workspace, "run1.ncu-rep", [
        make_action(duration=9.0, marker=1.0),
        make_action(duration=9.0, marker=2.0),
    ])
    bundle = _extract(fake_pri, workspace, ["run1.ncu-rep"])
    assert _marker_of(bundle, "run1") == 1.0


def test_four_equal_instances_take_lower_median_index(fake_pri, workspace):
    add_report(fake_pri, workspace, "run1.ncu-rep", [
        make_action(duration=9.0, marker=float(i)) for i in range(1, 5)
    ])
    bundle = _extract(fake_pri, workspace, ["run1.ncu-rep"])
    assert _marker_of(bundle, "run1") == 2.0  # index (4-1)//2 = 1


def test_tie_among_longest_only(fake_pri, workspace):
    add_report(fake_pri, workspace, "run1.ncu-rep", [
        make_action(duration=5.0, marker=1.0),
        make_action(duration=9.0, marker=2.0),
        make_action(duration=9.0, marker=3.0),
    ])
    bundle = _extract(fake_pri, workspace, ["run1.ncu-rep"])
    assert _marker_of(bundle, "run1") == 2.0


def test_non_matching_launches_are_ignored(fake_pri, workspace):
    add_report(fake_pri, workspace, "run1.ncu-rep", [
        make_action(kernel="memset_kernel(void *)", duration=99.0, marker=1.0),
        make_action(duration=2.0, marker=2.0),
    ])
    bundle = _extract(fake_pri, workspace, ["run1.ncu-rep"])
    assert _marker_of(bundle, "run1") == 2.0


def test_no_matching_kernel_raises(fake_pri, workspace):
    add_report(fake_pri, workspace, "run1.ncu-rep", [
        make_action(kernel="other_kernel(int)"),
    ])
    with pytest.raises(NoMatchingKernel):
        _extract(fake_pri, workspace, ["run1.ncu-rep"])


def test_select_instance_is_pure_over_order():
    actions = [make_action(duration=5.0, marker=1.0), make_action(duration=9.0, marker=2.0)]
    chosen = select_instance(actions, "Fan2", "r")
    assert chosen.metric_by_name("instance_marker").value() == 2.0


# --- error paths ------------------------------------------------------------------

def test_import_failure_has_install_hint(monkeypatch):
    monkeypatch.delitem(sys.modules, "ncu_report", raising=False)
    with pytest.raises(ImportFailure) as err:
        load_pri()
    assert "NCU_PYTHON_PATH" in str(err.value)


def test_unreadable_report(fake_pri, workspace):
    path = workspace / "reports" / "ghost.ncu-rep"
    path.write_bytes(b"junk")
    with pytest.raises(ReportUnreadable):
        _extract(fake_pri, workspace, ["ghost.ncu-rep"])


# --- output contract -----------------------------------------------------------------

def test_output_validates_against_shared_schema(fake_pri, workspace):
    add_report(fake_pri, workspace, "run1.ncu-rep", [make_action()])
    bundle = _extract(fake_pri, workspace, ["run1.ncu-rep"])
    jsonschema.validate(bundle, bundle_schema())
    (profile,) = bundle["profiles"]
    assert profile["gpu_arch"] == "H100"
    assert profile["knobs"] == {"block_size": 16}
    names = {m["name"] for m in profile["metrics"]}
    assert "dram__throughput" in names and "profiler__rule_text" in names


def test_output_loads_through_primary_ingest_with_zero_violations(fake_pri, workspace):
    from perfexplain.ingest import parse_bundle_json
    from perfexplain.model import validate_bundle

    add_report(fake_pri, workspace, "run1.ncu-rep", [make_action()])
    bundle = _extract(fake_pri, workspace, ["run1.ncu-rep"])
    parsed = parse_bundle_json(json.dumps(bundle))
    assert validate_bundle(parsed) == []
    assert parsed.profiles[0].metrics["dram__throughput"].kind == "percent"
    assert parsed.profiles[0].metrics["profiler__rule_text"].kind == "text"
    print("ACCEPTANCE PASS: extractor contract (schema + primary ingest, zero violations)")


def test_schema_copy_identical_to_primary():
    ours = (resources.files("ncuextract") / "assets" / "bundle.schema.json").read_text("utf-8")
    theirs = (resources.files("perfexplain") / "assets" / "bundle.schema.json").read_text("utf-8")
    assert ours == theirs


def test_extraction_is_read_only(fake_pri, workspace):
    path = add_report(fake_pri, workspace, "run1.ncu-rep", [make_action()])
    before = path.read_bytes()
    _extract(fake_pri, workspace, ["run1.ncu-rep"])
    assert path.read_bytes() == before


def test_profile_without_overrides_uses_defaults(fake_pri, workspace):
    add_report(fake_pri, workspace, "run2.ncu-rep", [make_action()])
    bundle = _extract(fake_pri, workspace, ["run2.ncu-rep"])
    (profile,) = bundle["profiles"]
    assert profile["knobs"] == {"block_size": 16}
    assert profile["gpu_arch"] == "unspecified"


# --- line CSV normalization -------------------------------------------------------------

def test_normalize_canonical_line_csv():
    text = "file,line,metric,value\nfan2.cu,10,inst,100\nfan2.cu,10,sectors,7\n"
    records = normalize_line_csv(text, "t")
    assert records == [{"file": "fan2.cu", "line": 10, "metrics": {"inst": 100.0, "sectors": 7.0}}]


def test_normalize_wide_gui_export():
    text = (
        "File,Line,Instructions Executed,Memory Sectors\n"
        "fan2.cu,10,100,7\n"
        "fan2.cu,12,25,\n"
        ",0,9,9\n"
    )
    records = normalize_line_csv(text, "t")
    assert records[0] == {
        "file": "fan2.cu", "line": 10,
        "metrics": {"Instructions Executed": 100.0, "Memory Sectors": 7.0},
    }
    assert records[1]["metrics"] == {"Instructions Executed": 25.0}
    assert len(records) == 2  # the empty-file row is dropped


def test_normalize_unknown_header_errors():
    with pytest.raises(LineCsvError):
        normalize_line_csv("Address,Source\n0x0,foo\n", "t")


def test_line_records_marked_external_when_not_in_src(fake_pri, workspace):
    add_report(fake_pri, workspace, "run1.ncu-rep", [make_action()])
    lines = workspace / "reports" / "run1.lines.csv"
    lines.write_text(
        "file,line,metric,value\nfan2.cu,10,inst,1\ncuda_runtime.h,5,inst,2\n", encoding="utf-8"
    )
    bundle = _extract(fake_pri, workspace, ["run1.ncu-rep"], lines=[lines])
    (profile,) = bundle["profiles"]
    by_file = {r["file"]: r for r in profile["lines"]}
    assert by_file["fan2.cu"]["external"] is False
    assert by_file["cuda_runtime.h"]["external"] is True


# --- CLI ---------------------------------------------------------------------------------

def test_cli_end_to_end(fake_pri, workspace, capsys):
    add_report(fake_pri, workspace, "run1.ncu-rep", [
        make_action(duration=5.0, marker=1.0),
        make_action(duration=9.0, marker=2.0),
    ])
    out = workspace / "bundle.json"
    code = main([
        "--reports", str(workspace / "reports" / "*.ncu-rep"),
        "--src", str(workspace / "src"),
        "--manifest", str(workspace / "overrides.json"),
        "--out", str(out),
    ])
    assert code == 0
    bundle = json.loads(out.read_text(encoding="utf-8"))
    jsonschema.validate(bundle, bundle_schema())
    assert _marker_of(bundle, "run1") == 2.0


def test_cli_stdout_default(fake_pri, workspace, capsys):
    add_report(fake_pri, workspace, "run1.ncu-rep", [make_action()])
    code = main([
        "--reports", str(workspace / "reports" / "*.ncu-rep"),
        "--src", str(workspace / "src"),
        "--manifest", str(workspace / "overrides.json"),
    ])
    assert code == 0
    bundle = json.loads(capsys.readouterr().out)
    assert bundle["app_name"] == "gaussian"


def test_cli_no_reports_matched(fake_pri, workspace):
    code = main([
        "--reports", str(workspace / "reports" / "*.nothing"),
        "--src", str(workspace / "src"),
        "--manifest", str(workspace / "overrides.json"),
    ])
    assert code == 1

from __future__ import annotations

import json
import shutil

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfexplain.errors import (
    CsvSyntax,
    DuplicateMetric,
    JsonSyntax,
    MissingManifest,
    NonPositiveLine,
    ProfileParse,
    SchemaViolation,
    UnreadableSource,
)
from perfexplain.ingest import (
    load_bundle,
    make_metric,
    parse_bundle_json,
    parse_line_csv,
    parse_metrics_csv,
    serialize_bundle_json,
    serialize_metrics_csv,
)
from perfexplain.model import validate_bundle

from conftest import GAUSSIAN_DIR, synth_bundle, write_xsbench_dir


# --- metrics CSV ---------------------------------------------------------------

def test_parse_metrics_csv_percent_example():
    metrics = parse_metrics_csv("metric,unit,value\ndram__throughput,%,1.77\n")
    assert len(metrics) == 1
    m = metrics[0]
    assert m.name == "dram__throughput"
    assert m.kind == "percent"
    assert m.value == 1.77
    assert m.unit == "%"


def test_parse_metrics_csv_empty_data_section():
    assert parse_metrics_csv("metric,unit,value\n") == []
    assert parse_metrics_csv("") == []


def test_parse_metrics_csv_duplicate_metric():
    text = "metric,unit,value\na,,1\na,,2\n"
    with pytest.raises(DuplicateMetric):
        parse_metrics_csv(text)


def test_parse_metrics_csv_bad_header():
    with pytest.raises(CsvSyntax) as err:
        parse_metrics_csv("name,unit,value\na,,1\n")
    assert err.value.line == 1


def test_parse_metrics_csv_wrong_field_count_reports_line():
    with pytest.raises(CsvSyntax) as err:
        parse_metrics_csv("metric,unit,value\na,,1\nb,2\n")
    assert err.value.line == 3


def test_parse_metrics_csv_thousands_separator_and_text():
    text = 'metric,unit,value\nsectors,sector,"374,514"\nmsg,,n/a\n'
    sectors, msg = parse_metrics_csv(text)
    assert sectors.value == 374514.0 and sectors.kind == "counter"
    assert msg.value == "n/a" and msg.kind == "text"


def test_parse_metrics_csv_flags_burst_percent():
    (m,) = parse_metrics_csv("metric,unit,value\nburst,%,131.4\n")
    assert m.kind == "percent" and m.unchecked and m.value == 131.4


def test_kind_inference_ratio():
    (m,) = parse_metrics_csv("metric,unit,value\nbps,B/sector,8.34\n")
    assert m.kind == "ratio"


def test_nonfinite_values_stay_text():
    text = "metric,unit,value\na,,inf\nb,,NaN\nc,,-Infinity\n"
    metrics = parse_metrics_csv(text)
    assert [m.kind for m in metrics] == ["text"] * 3
    assert [m.value for m in metrics] == ["inf", "NaN", "-Infinity"]


_name = st.text(alphabet="abcdefghij_", min_size=1, max_size=12)
_unit = st.sampled_from([None, "%", "B/sector", "us", "register/thread"])
_number = st.floats(allow_nan=False, allow_infinity=False, width=64,
                    min_value=-1e12, max_value=1e12)
# CSV fields are whitespace-stripped on parse, so the round-trip domain is
# stripped text (what ingest itself ever produces).
_text_value = st.text(alphabet="xyz ", min_size=1, max_size=8).map(str.strip).filter(bool)


@st.composite
def metric_lists(draw):
    names = draw(st.lists(_name, min_size=0, max_size=8, unique=True))
    out = []
    for name in names:
        unit = draw(_unit)
        value = draw(st.one_of(_number, _text_value))
        out.append(make_metric(name, unit, value))
    return out


@given(metric_lists())
@settings(max_examples=150)
def test_metrics_csv_round_trip(metrics):
    assert parse_metrics_csv(serialize_metrics_csv(metrics)) == metrics


# --- line CSV -------------------------------------------------------------------

def test_parse_line_csv_groups_by_file_line():
    text = (
        "file,line,metric,value\n"
        "a.cu,10,inst,100\n"
        "a.cu,10,sectors,7\n"
        "b.cu,5,inst,3\n"
    )
    records = parse_line_csv(text)
    assert len(records) == 2
    assert records[0].file == "a.cu" and records[0].line == 10
    assert records[0].metrics == {"inst": 100.0, "sectors": 7.0}
    assert records[1].metrics == {"inst": 3.0}


def test_parse_line_csv_nonpositive_line():
    with pytest.raises(NonPositiveLine):
        parse_line_csv("file,line,metric,value\na.cu,0,inst,1\n")


def test_parse_line_csv_empty():
    assert parse_line_csv("") == []
    assert parse_line_csv("file,line,metric,value\n") == []


def test_parse_line_csv_rejects_non_numeric_value():
    with pytest.raises(CsvSyntax):
        parse_line_csv("file,line,metric,value\na.cu,3,inst,lots\n")


# --- bundle directory -------------------------------------------------------------

def test_load_gaussian_fixture(gaussian_bundle):
    assert len(gaussian_bundle.profiles) == 1
    assert len(gaussian_bundle.sources) == 1
    assert gaussian_bundle.profiles[0].id == "gaussian-h100"
    assert gaussian_bundle.profiles[0].metrics["dram__throughput"].value == 1.77
    assert validate_bundle(gaussian_bundle) == []
    records = gaussian_bundle.profiles[0].line_records
    assert records is not None and len(records) == 2  # grouped from 3 rows
    assert all(not r.external for r in records)


def test_load_bundle_missing_manifest(tmp_path):
    with pytest.raises(MissingManifest):
        load_bundle(tmp_path)


def test_load_xsbench_75(tmp_path):
    bundle = load_bundle(write_xsbench_dir(tmp_path))
    assert len(bundle.profiles) == 75
    assert bundle.manifest.knob_names() == {"grid_type", "block_size", "max_registers"}


def test_profile_order_is_lexicographic_filename_order(tmp_path):
    (tmp_path / "profiles").mkdir()
    (tmp_path / "src").mkdir()
    (tmp_path / "src" / "k.cu").write_text("__global__ void k() {}\n")
    for pid in ("b", "a", "c"):
        (tmp_path / "profiles" / f"{pid}.metrics.csv").write_text("metric,unit,value\nm,,1\n")
    (tmp_path / "manifest.json").write_text(json.dumps({
        "app_name": "x", "kernel_name": "k", "knobs": [], "defaults": {},
    }))
    bundle = load_bundle(tmp_path)
    assert bundle.profile_ids() == ["a", "b", "c"]


def test_load_bundle_is_deterministic(tmp_path):
    write_xsbench_dir(tmp_path, count=6)
    assert load_bundle(tmp_path) == load_bundle(tmp_path)


def test_corrupt_profile_csv_reports_file_and_line(tmp_path):
    shutil.copytree(GAUSSIAN_DIR, tmp_path / "g")
    bad = tmp_path / "g" / "profiles" / "gaussian-h100.metrics.csv"
    bad.write_text("metric,unit,value\nonly,two\n")
    with pytest.raises(ProfileParse) as err:
        load_bundle(tmp_path / "g")
    assert err.value.file == "gaussian-h100.metrics.csv"
    assert err.value.line == 2


def test_undecodable_source_raises(tmp_path):
    shutil.copytree(GAUSSIAN_DIR, tmp_path / "g")
    (tmp_path / "g" / "src" / "blob.bin").write_bytes(b"\xff\xfe\x00\x91binary")
    with pytest.raises(UnreadableSource):
        load_bundle(tmp_path / "g")


def test_manifest_guidelines_override_is_loaded(tmp_path):
    shutil.copytree(GAUSSIAN_DIR, tmp_path / "g")
    manifest_path = tmp_path / "g" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["guidelines"] = "CUSTOM GUIDELINES 42"
    manifest_path.write_text(json.dumps(manifest))
    bundle = load_bundle(tmp_path / "g")
    assert bundle.guidelines == "CUSTOM GUIDELINES 42"


def test_external_line_records_marked(tmp_path):
    shutil.copytree(GAUSSIAN_DIR, tmp_path / "g")
    lines = tmp_path / "g" / "profiles" / "gaussian-h100.lines.csv"
    lines.write_text("file,line,metric,value\ncuda_runtime.h,99,inst,5\n")
    bundle = load_bundle(tmp_path / "g")
    (record,) = bundle.profiles[0].line_records
    assert record.external


# --- bundle JSON -------------------------------------------------------------------

MINIMAL = {
    "app_name": "app",
    "kernel_name": "kern",
    "knobs": [{"name": "block_size", "type": "numeric"}],
    "defaults": {"block_size": 128},
    "profiles": [
        {
            "id": "p1",
            "gpu_arch": "H100",
            "knobs": {"block_size": 128},
            "metrics": [{"name": "sm__throughput", "unit": "%", "value": 42.0}],
        }
    ],
    "sources": [{"path": "k.cu", "content": "__global__ void k() {}\n"}],
}


def test_parse_bundle_json_minimal():
    bundle = parse_bundle_json(json.dumps(MINIMAL))
    assert bundle.profile_ids() == ["p1"]
    assert validate_bundle(bundle) == []


def test_parse_bundle_json_undeclared_knob():
    doc = json.loads(json.dumps(MINIMAL))
    doc["profiles"][0]["knobs"]["mystery"] = 1
    with pytest.raises(SchemaViolation) as err:
        parse_bundle_json(json.dumps(doc))
    assert "mystery" in err.value.path


def test_parse_bundle_json_bad_json():
    with pytest.raises(JsonSyntax):
        parse_bundle_json("{not json")


def test_bundle_json_round_trip_gaussian(gaussian_bundle):
    assert parse_bundle_json(serialize_bundle_json(gaussian_bundle)) == gaussian_bundle


def test_bundle_json_round_trip_synthetic():
    bundle = synth_bundle(num_profiles=3, num_sources=2)
    assert parse_bundle_json(serialize_bundle_json(bundle)) == bundle


def test_bundle_json_matches_shared_schema(gaussian_bundle):
    import jsonschema

    from perfexplain.prompts import bundle_schema

    doc = json.loads(serialize_bundle_json(gaussian_bundle))
    jsonschema.validate(doc, bundle_schema())

"""Build canonical bundle JSON from binary profiler reports.

One KernelProfile per report file: launches matching the manifest kernel name
are filtered, the longest-running instance is selected, and on a duration tie
the median instance (lower median for an even count) wins. Knob values come
from the manifest overrides sidecar; launch parameters are not reliably
recoverable from report files. Extraction never writes to its inputs.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from . import pri
from .errors import LineCsvError, ManifestError, NoMatchingKernel

logger = logging.getLogger(__name__)

CANONICAL_LINE_HEADER = ["file", "line", "metric", "value"]


def bundle_schema() -> dict:
    text = (resources.files("ncuextract") / "assets" / "bundle.schema.json").read_text("utf-8")
    return json.loads(text)


def load_manifest(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest overrides {path}: {exc}") from exc
    for key in ("app_name", "kernel_name"):
        if not isinstance(data.get(key), str) or not data[key]:
            raise ManifestError(f"manifest overrides must set a non-empty {key!r}")
    data.setdefault("knobs", [])
    data.setdefault("defaults", {})
    data.setdefault("profiles", {})
    return data


def select_instance(actions: list, kernel_name: str, report_path: str):
    """Longest-running matching launch; ties resolve to the median instance
    (lower median for an even count of tied instances)."""
    matching = [a for a in actions if kernel_name in pri.action_name(a)]
    if not matching:
        raise NoMatchingKernel(kernel_name, report_path)
    durations = [pri.action_duration(a) for a in matching]
    if any(d is None for d in durations):
        logger.warning(
            "%s: duration metric missing on some instances; treating them as 0", report_path
        )
        durations = [d if d is not None else 0.0 for d in durations]
    longest = max(durations)
    tied = [a for a, d in zip(matching, durations) if d == longest]
    return tied[(len(tied) - 1) // 2]


def _numeric(value: Any) -> float | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value.replace(",", ""))
        except ValueError:
            return None
    return None


def extract_metrics(action) -> list[dict]:
    out = []
    for name in action.metric_names():
        raw = pri.metric_value(action, name)
        if raw is None:
            continue
        value = _numeric(raw)
        entry: dict[str, Any] = {
            "name": name,
            "unit": pri.metric_unit(action, name),
            "value": value if value is not None else str(raw),
        }
        out.append(entry)
    return out


def normalize_line_csv(text: str, source: str) -> list[dict]:
    """Normalize a line-level CSV export to canonical line records.

    Accepts either the canonical long format (file,line,metric,value) or the
    profiler GUI's wide export (File/Line columns plus one column per metric).
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    stripped = [h.strip() for h in header]
    lowered = [h.lower() for h in stripped]

    grouped: dict[tuple[str, int], dict[str, float]] = {}

    def add(file: str, line: int, metric: str, value: float) -> None:
        grouped.setdefault((file, line), {})[metric] = value

    if lowered == CANONICAL_LINE_HEADER:
        for row in reader:
            if len(row) != 4:
                raise LineCsvError(source, f"row {reader.line_num}: expected 4 fields")
            file, line_s, metric, value_s = (f.strip() for f in row)
            value = _numeric(value_s)
            if value is None:
                raise LineCsvError(source, f"row {reader.line_num}: non-numeric value {value_s!r}")
            add(file, int(line_s), metric, value)
    elif "file" in lowered and "line" in lowered:
        file_col = lowered.index("file")
        line_col = lowered.index("line")
        metric_cols = [
            (i, stripped[i]) for i in range(len(stripped)) if i not in (file_col, line_col)
        ]
        for row in reader:
            if len(row) < len(stripped):
                continue
            file = row[file_col].strip()
            if not file:
                continue
            try:
                line = int(row[line_col].strip())
            except ValueError:
                continue
            if line < 1:
                continue
            for i, metric in metric_cols:
                value = _numeric(row[i].strip())
                if value is not None:
                    add(file, line, metric, value)
    else:
        raise LineCsvError(source, f"unrecognized line CSV header: {', '.join(stripped)}")

    return [
        {"file": f, "line": ln, "metrics": metrics}
        for (f, ln), metrics in grouped.items()
    ]


def read_sources(src_dir: str | Path) -> list[dict]:
    root = Path(src_dir)
    out = []
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        out.append(
            {"path": path.relative_to(root).as_posix(), "content": path.read_text(encoding="utf-8")}
        )
    return out


def extract_bundle(
    report_paths: list[str | Path],
    src_dir: str | Path,
    manifest: dict,
    line_csv_paths: list[str | Path] | None = None,
) -> dict:
    """Assemble and schema-validate the bundle document."""
    pri_module = pri.load_pri()
    sources = read_sources(src_dir)
    source_paths = {s["path"] for s in sources}
    lines_by_stem: dict[str, list[dict]] = {}
    for path in line_csv_paths or []:
        path = Path(path)
        records = normalize_line_csv(path.read_text(encoding="utf-8"), str(path))
        for record in records:
            record["external"] = record["file"] not in source_paths
        stem = path.name[: -len(".lines.csv")] if path.name.endswith(".lines.csv") else path.stem
        lines_by_stem[stem] = records

    defaults = manifest["defaults"]
    default_knobs = {k: v for k, v in defaults.items() if k != "gpu_arch"}
    profiles = []
    for path in sorted(Path(p) for p in report_paths):
        report = pri.open_report(pri_module, str(path))
        actions = list(pri.iter_actions(report))
        action = select_instance(actions, manifest["kernel_name"], str(path))
        profile_id = path.stem  # filename stem: ids preserve filename ordering
        overrides = manifest["profiles"].get(profile_id, {})
        default_arch = defaults.get("gpu_arch")
        profile: dict[str, Any] = {
            "id": profile_id,
            "gpu_arch": overrides.get(
                "gpu_arch", default_arch if isinstance(default_arch, str) else "unspecified"
            ),
            "knobs": overrides.get("knobs", dict(default_knobs)),
            "metrics": extract_metrics(action),
        }
        if profile_id in lines_by_stem:
            profile["lines"] = lines_by_stem[profile_id]
        profiles.append(profile)

    bundle = {
        "app_name": manifest["app_name"],
        "kernel_name": manifest["kernel_name"],
        "knobs": manifest["knobs"],
        "defaults": defaults,
        "profiles": profiles,
        "sources": sources,
    }
    if manifest.get("guidelines"):
        bundle["guidelines"] = manifest["guidelines"]
    jsonschema.validate(bundle, bundle_schema())
    return bundle

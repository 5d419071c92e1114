"""Parse profiler exports and the canonical bundle formats into model values.

Two on-disk forms are supported:

* a bundle directory: ``manifest.json`` + ``profiles/<id>.metrics.csv``
  (+ optional ``<id>.lines.csv``) + ``src/**`` source tree;
* a single bundle JSON document (the interchange format the extractor tool
  emits; see ``assets/bundle.schema.json``).

All functions are pure with respect to their inputs and deterministic: profile
order always equals lexicographic filename order, which downstream ranking
relies on for tie-breaking.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any

from .errors import (
    CsvSyntax,
    DuplicateMetric,
    JsonSyntax,
    ManifestSchema,
    MissingManifest,
    NonPositiveLine,
    ProfileParse,
    SchemaViolation,
    UnreadableSource,
)
from .model import (
    BundleManifest,
    KernelProfile,
    KnobDecl,
    LineRecord,
    MetricValue,
    ProfileBundle,
    RunConfig,
    SourceFile,
    validate_bundle,
)

METRICS_HEADER = ["metric", "unit", "value"]
LINES_HEADER = ["file", "line", "metric", "value"]

# Non-finite spellings stay text: inf/nan values would poison JSON
# interchange and distance math.
_TEXT_SENTINELS = {"n/a", "na", "nan", "", "inf", "+inf", "-inf", "infinity", "-infinity"}


def parse_number(raw: str) -> float | None:
    """Parse a profiler-emitted number; None when the text is not numeric.

    Thousands separators are stripped ("374,514" -> 374514.0); "n/a" and
    friends are not numbers.
    """
    text = raw.strip()
    if text.lower() in _TEXT_SENTINELS:
        return None
    for candidate in (text, text.replace(",", "")):
        try:
            value = float(candidate)
        except ValueError:
            continue
        if value != value or value in (float("inf"), float("-inf")):
            return None
        return value
    return None


def format_number(value: float) -> str:
    """Inverse-friendly rendering: integral floats print without '.0'."""
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def infer_kind(unit: str | None, numeric: bool) -> str:
    if not numeric:
        return "text"
    if unit == "%":
        return "percent"
    if unit and "/" in unit:
        return "ratio"
    return "counter"


def make_metric(name: str, unit: str | None, raw_value: float | str, kind: str | None = None) -> MetricValue:
    """Build a MetricValue, attempting numeric parse and inferring kind.

    Percent values outside [0, 100] are preserved and flagged ``unchecked``
    rather than rejected.
    """
    if isinstance(raw_value, (int, float)):
        value: float | str = float(raw_value)
    else:
        parsed = parse_number(raw_value)
        value = parsed if parsed is not None else raw_value
    numeric = isinstance(value, float)
    resolved_kind = kind if kind is not None else infer_kind(unit, numeric)
    unchecked = (
        resolved_kind == "percent"
        and numeric
        and not (0.0 <= float(value) <= 100.0)
    )
    return MetricValue(name=name, value=value, unit=unit or None, kind=resolved_kind, unchecked=unchecked)


def parse_metrics_csv(text: str) -> list[MetricValue]:
    """Parse the canonical ``metric,unit,value`` CSV into MetricValues.

    Row order is preserved. Numeric parse is attempted per row with fallback
    to text kind, so no profiler data is ever dropped.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader, None)
    except csv.Error as exc:
        raise CsvSyntax(1, str(exc)) from exc
    if header is None:
        return []
    if [h.strip() for h in header] != METRICS_HEADER:
        raise CsvSyntax(1, f"expected header {','.join(METRICS_HEADER)!r}, got {','.join(header)!r}")

    out: list[MetricValue] = []
    seen: set[str] = set()
    try:
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise CsvSyntax(reader.line_num, f"expected 3 fields, got {len(row)}")
            name, unit, value = (f.strip() for f in row)
            if not name:
                raise CsvSyntax(reader.line_num, "empty metric name")
            if name in seen:
                raise DuplicateMetric(name)
            seen.add(name)
            out.append(make_metric(name, unit, value))
    except csv.Error as exc:
        raise CsvSyntax(reader.line_num, str(exc)) from exc
    return out


def serialize_metrics_csv(metrics: list[MetricValue]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for m in metrics:
        value = format_number(m.value) if m.is_numeric else str(m.value)
        writer.writerow([m.name, m.unit or "", value])
    return buf.getvalue()


def parse_line_csv(text: str) -> list[LineRecord]:
    """Parse ``file,line,metric,value`` rows into grouped LineRecords.

    Rows sharing a (file, line) pair merge into one record; record order is
    first appearance.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader, None)
    except csv.Error as exc:
        raise CsvSyntax(1, str(exc)) from exc
    if header is None:
        return []
    if [h.strip() for h in header] != LINES_HEADER:
        raise CsvSyntax(1, f"expected header {','.join(LINES_HEADER)!r}, got {','.join(header)!r}")

    grouped: dict[tuple[str, int], dict[str, float]] = {}
    try:
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise CsvSyntax(reader.line_num, f"expected 4 fields, got {len(row)}")
            file, line_s, metric, value_s = (f.strip() for f in row)
            if not file or not metric:
                raise CsvSyntax(reader.line_num, "empty file or metric field")
            try:
                line = int(line_s)
            except ValueError as exc:
                raise CsvSyntax(reader.line_num, f"line is not an integer: {line_s!r}") from exc
            if line < 1:
                raise NonPositiveLine(reader.line_num, line)
            value = parse_number(value_s)
            if value is None:
                raise CsvSyntax(reader.line_num, f"value is not numeric: {value_s!r}")
            grouped.setdefault((file, line), {})[metric] = value
    except csv.Error as exc:
        raise CsvSyntax(reader.line_num, str(exc)) from exc

    return [LineRecord(file=f, line=ln, metrics=dict(ms)) for (f, ln), ms in grouped.items()]


def _mark_external(records: list[LineRecord], source_paths: set[str]) -> tuple[LineRecord, ...]:
    out = []
    for rec in records:
        if rec.file not in source_paths and not rec.external:
            rec = LineRecord(file=rec.file, line=rec.line, metrics=rec.metrics, external=True)
        out.append(rec)
    return tuple(out)


def _manifest_from_dict(data: Any) -> tuple[BundleManifest, dict[str, Any], str | None]:
    """Shared manifest decoding; returns (manifest, per-profile map, guidelines)."""
    if not isinstance(data, dict):
        raise ManifestSchema("manifest must be a JSON object")
    for key in ("app_name", "kernel_name"):
        if not isinstance(data.get(key), str) or not data[key]:
            raise ManifestSchema(f"{key} must be a non-empty string")
    knob_decls = []
    for i, entry in enumerate(data.get("knobs", [])):
        if not isinstance(entry, dict) or "name" not in entry or "type" not in entry:
            raise ManifestSchema(f"knobs[{i}] must be an object with name and type")
        if entry["type"] not in ("numeric", "categorical"):
            raise ManifestSchema(f"knobs[{i}].type must be numeric or categorical")
        knob_decls.append(KnobDecl(name=entry["name"], type=entry["type"], unit=entry.get("unit")))
    defaults = data.get("defaults", {})
    if not isinstance(defaults, dict):
        raise ManifestSchema("defaults must be an object")
    declared = {k.name for k in knob_decls}
    for name in declared:
        if name not in defaults:
            raise ManifestSchema(f"knob {name!r} has no default")
    for name in defaults:
        if name != "gpu_arch" and name not in declared:
            raise ManifestSchema(f"default for undeclared knob {name!r}")
    profiles_meta = data.get("profiles", {})
    if not isinstance(profiles_meta, dict):
        raise ManifestSchema("profiles must map profile ids to run configuration")
    guidelines = data.get("guidelines")
    if guidelines is not None and not isinstance(guidelines, str):
        raise ManifestSchema("guidelines must be a string")
    manifest = BundleManifest(
        app_name=data["app_name"],
        kernel_name=data["kernel_name"],
        knobs=tuple(knob_decls),
        defaults=dict(defaults),
    )
    return manifest, profiles_meta, guidelines


def _run_config(profile_id: str, meta: Any, manifest: BundleManifest) -> RunConfig:
    if not isinstance(meta, dict):
        raise ManifestSchema(f"profiles[{profile_id!r}] must be an object")
    default_arch = manifest.defaults.get("gpu_arch")
    gpu_arch = meta.get("gpu_arch", default_arch if isinstance(default_arch, str) else "unspecified")
    knobs = meta.get("knobs")
    if knobs is None:
        # Absent entry: this profile ran at the declared defaults.
        knobs = {k: v for k, v in manifest.defaults.items() if k != "gpu_arch"}
    if not isinstance(knobs, dict):
        raise ManifestSchema(f"profiles[{profile_id!r}].knobs must be an object")
    return RunConfig(profile_id=profile_id, gpu_arch=gpu_arch, knobs=dict(knobs))


def load_bundle(directory: str | Path) -> ProfileBundle:
    """Load and validate a bundle directory.

    Profile order equals lexicographic order of the ``.metrics.csv``
    filenames. Line records naming files outside ``src/`` are marked
    external.
    """
    root = Path(directory)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise MissingManifest(str(root))
    try:
        manifest_data = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestSchema(f"manifest.json unreadable: {exc}") from exc
    manifest, profiles_meta, guidelines = _manifest_from_dict(manifest_data)

    sources: list[SourceFile] = []
    src_root = root / "src"
    if src_root.is_dir():
        for path in sorted(p for p in src_root.rglob("*") if p.is_file()):
            rel = path.relative_to(src_root).as_posix()
            try:
                content = path.read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError) as exc:
                raise UnreadableSource(rel, str(exc)) from exc
            sources.append(SourceFile(path=rel, content=content))
    source_paths = {s.path for s in sources}

    profiles: list[KernelProfile] = []
    profiles_root = root / "profiles"
    metric_files = sorted(profiles_root.glob("*.metrics.csv")) if profiles_root.is_dir() else []
    for metrics_path in metric_files:
        profile_id = metrics_path.name[: -len(".metrics.csv")]
        try:
            metrics = parse_metrics_csv(metrics_path.read_text(encoding="utf-8"))
        except CsvSyntax as exc:
            raise ProfileParse(metrics_path.name, exc.line, exc.reason) from exc
        except DuplicateMetric as exc:
            raise ProfileParse(metrics_path.name, 0, str(exc)) from exc
        line_records: tuple[LineRecord, ...] | None = None
        lines_path = profiles_root / f"{profile_id}.lines.csv"
        if lines_path.is_file():
            try:
                records = parse_line_csv(lines_path.read_text(encoding="utf-8"))
            except (CsvSyntax, NonPositiveLine) as exc:
                line = exc.line if isinstance(exc, CsvSyntax) else exc.row
                raise ProfileParse(lines_path.name, line, str(exc)) from exc
            line_records = _mark_external(records, source_paths)
        config = _run_config(profile_id, profiles_meta.get(profile_id, {}), manifest)
        profiles.append(
            KernelProfile(
                id=profile_id,
                kernel_name=manifest.kernel_name,
                app_name=manifest.app_name,
                config=config,
                metrics={m.name: m for m in metrics},
                line_records=line_records,
            )
        )

    bundle = ProfileBundle(
        manifest=manifest,
        profiles=tuple(profiles),
        sources=tuple(sources),
        guidelines=guidelines,
    )
    violations = validate_bundle(bundle)
    if violations:
        raise ManifestSchema("; ".join(violations))
    return bundle


# --- bundle JSON interchange --------------------------------------------------

def _req(obj: dict, key: str, typ: type | tuple, path: str) -> Any:
    if key not in obj:
        raise SchemaViolation(f"{path}.{key}", "missing required field")
    value = obj[key]
    if not isinstance(value, typ):
        raise SchemaViolation(f"{path}.{key}", f"expected {typ}, got {type(value).__name__}")
    return value


def parse_bundle_json(text: str) -> ProfileBundle:
    """Parse the canonical bundle JSON document.

    Yields the same result as load_bundle on the equivalent directory; the
    assembled bundle must validate cleanly.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise JsonSyntax(str(exc)) from exc
    if not isinstance(data, dict):
        raise SchemaViolation("$", "bundle document must be a JSON object")

    try:
        manifest, _, _ = _manifest_from_dict(
            {k: v for k, v in data.items() if k in ("app_name", "kernel_name", "knobs", "defaults")}
        )
    except ManifestSchema as exc:
        raise SchemaViolation("$", exc.violation) from exc

    declared = manifest.knob_names()
    profiles: list[KernelProfile] = []
    raw_profiles = _req(data, "profiles", list, "$")
    for i, praw in enumerate(raw_profiles):
        ppath = f"$.profiles[{i}]"
        if not isinstance(praw, dict):
            raise SchemaViolation(ppath, "profile must be an object")
        pid = _req(praw, "id", str, ppath)
        gpu_arch = _req(praw, "gpu_arch", str, ppath)
        knobs = _req(praw, "knobs", dict, ppath)
        for name in knobs:
            if name not in declared:
                raise SchemaViolation(f"{ppath}.knobs.{name}", "knob not declared in schema")
        metrics: dict[str, MetricValue] = {}
        for j, mraw in enumerate(_req(praw, "metrics", list, ppath)):
            mpath = f"{ppath}.metrics[{j}]"
            if not isinstance(mraw, dict):
                raise SchemaViolation(mpath, "metric must be an object")
            name = _req(mraw, "name", str, mpath)
            if name in metrics:
                raise SchemaViolation(mpath, f"duplicate metric {name!r}")
            if "value" not in mraw:
                raise SchemaViolation(f"{mpath}.value", "missing required field")
            value = mraw["value"]
            if not isinstance(value, (int, float, str)) or isinstance(value, bool):
                raise SchemaViolation(f"{mpath}.value", "value must be number or string")
            unit = mraw.get("unit") or None
            if unit is not None and not isinstance(unit, str):
                raise SchemaViolation(f"{mpath}.unit", "unit must be a string")
            kind = mraw.get("kind")
            if kind is not None and kind not in ("counter", "ratio", "percent", "text"):
                raise SchemaViolation(f"{mpath}.kind", f"unknown kind {kind!r}")
            metrics[name] = make_metric(name, unit, value, kind=kind)
        line_records = None
        if "lines" in praw:
            records = []
            for j, lraw in enumerate(_req(praw, "lines", list, ppath)):
                lpath = f"{ppath}.lines[{j}]"
                if not isinstance(lraw, dict):
                    raise SchemaViolation(lpath, "line record must be an object")
                line = _req(lraw, "line", int, lpath)
                if line < 1:
                    raise SchemaViolation(f"{lpath}.line", "line must be >= 1")
                lmetrics = _req(lraw, "metrics", dict, lpath)
                for mname, mval in lmetrics.items():
                    if not isinstance(mval, (int, float)) or isinstance(mval, bool):
                        raise SchemaViolation(f"{lpath}.metrics.{mname}", "line metric values must be numeric")
                records.append(
                    LineRecord(
                        file=_req(lraw, "file", str, lpath),
                        line=line,
                        metrics={k: float(v) for k, v in lmetrics.items()},
                        external=bool(lraw.get("external", False)),
                    )
                )
            line_records = tuple(records)
        profiles.append(
            KernelProfile(
                id=pid,
                kernel_name=manifest.kernel_name,
                app_name=manifest.app_name,
                config=RunConfig(profile_id=pid, gpu_arch=gpu_arch, knobs=dict(knobs)),
                metrics=metrics,
                line_records=line_records,
            )
        )

    sources = []
    for i, sraw in enumerate(_req(data, "sources", list, "$")):
        spath = f"$.sources[{i}]"
        if not isinstance(sraw, dict):
            raise SchemaViolation(spath, "source must be an object")
        sources.append(SourceFile(path=_req(sraw, "path", str, spath), content=_req(sraw, "content", str, spath)))

    guidelines = data.get("guidelines")
    if guidelines is not None and not isinstance(guidelines, str):
        raise SchemaViolation("$.guidelines", "guidelines must be a string")

    source_paths = {s.path for s in sources}
    profiles = [
        KernelProfile(
            id=p.id,
            kernel_name=p.kernel_name,
            app_name=p.app_name,
            config=p.config,
            metrics=p.metrics,
            line_records=_mark_external(list(p.line_records), source_paths) if p.line_records else p.line_records,
        )
        for p in profiles
    ]

    bundle = ProfileBundle(
        manifest=manifest,
        profiles=tuple(profiles),
        sources=tuple(sources),
        guidelines=guidelines,
    )
    violations = validate_bundle(bundle)
    if violations:
        raise SchemaViolation("$", "; ".join(violations))
    return bundle


def bundle_to_dict(bundle: ProfileBundle) -> dict:
    def metric_dict(m: MetricValue) -> dict:
        out: dict[str, Any] = {"name": m.name, "unit": m.unit, "value": m.value, "kind": m.kind}
        if m.unchecked:
            out["unchecked"] = True
        return out

    def profile_dict(p: KernelProfile) -> dict:
        out: dict[str, Any] = {
            "id": p.id,
            "gpu_arch": p.config.gpu_arch,
            "knobs": dict(p.config.knobs),
            "metrics": [metric_dict(m) for m in p.metrics.values()],
        }
        if p.line_records is not None:
            out["lines"] = [
                {"file": r.file, "line": r.line, "metrics": dict(r.metrics), "external": r.external}
                for r in p.line_records
            ]
        return out

    doc: dict[str, Any] = {
        "app_name": bundle.manifest.app_name,
        "kernel_name": bundle.manifest.kernel_name,
        "knobs": [
            {"name": k.name, "type": k.type, **({"unit": k.unit} if k.unit else {})}
            for k in bundle.manifest.knobs
        ],
        "defaults": dict(bundle.manifest.defaults),
        "profiles": [profile_dict(p) for p in bundle.profiles],
        "sources": [{"path": s.path, "content": s.content} for s in bundle.sources],
    }
    if bundle.guidelines is not None:
        doc["guidelines"] = bundle.guidelines
    return doc


def serialize_bundle_json(bundle: ProfileBundle) -> str:
    return json.dumps(bundle_to_dict(bundle), indent=2, ensure_ascii=False) + "\n"

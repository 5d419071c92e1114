"""External stall-tree analyzer integration.

The analyzer itself is an external command (configured as ``{command, args}``)
that consumes a metrics CSV and a line-level CSV and prints a stall tree as
JSON. This module validates that tree and renders it to a deterministic
natural-language report without any LLM involvement. A stub command for tests
lives in ``perfexplain.drgpu_stub``.

Tree node schema: ``{"label": str, "stall_fraction": number in [0,1],
"children": [node...], "suggestions": [str...]}`` with children/suggestions
optional.
"""

from __future__ import annotations

import json
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .errors import AdapterFailure, TreeSchema
from .ingest import serialize_metrics_csv
from .model import KernelProfile


@dataclass(frozen=True)
class AdapterConfig:
    """External command invocation; args may contain ``{metrics_csv}`` and
    ``{lines_csv}`` placeholders."""

    command: str
    args: tuple[str, ...] = ()
    timeout: float = 120.0


def validate_tree(node: object, path: str = "root") -> None:
    if not isinstance(node, dict):
        raise TreeSchema(f"{path}: node must be an object")
    label = node.get("label")
    if not isinstance(label, str) or not label:
        raise TreeSchema(f"{path}: missing or empty label")
    fraction = node.get("stall_fraction")
    if not isinstance(fraction, (int, float)) or isinstance(fraction, bool):
        raise TreeSchema(f"{path} ({label}): stall_fraction must be a number")
    if not 0.0 <= float(fraction) <= 1.0:
        raise TreeSchema(f"{path} ({label}): stall_fraction {fraction} outside [0, 1]")
    children = node.get("children", [])
    if not isinstance(children, list):
        raise TreeSchema(f"{path} ({label}): children must be a list")
    suggestions = node.get("suggestions", [])
    if not isinstance(suggestions, list) or not all(isinstance(s, str) for s in suggestions):
        raise TreeSchema(f"{path} ({label}): suggestions must be a list of strings")
    for i, child in enumerate(children):
        validate_tree(child, f"{path}.children[{i}]")


def _sorted_children(node: dict) -> list[dict]:
    return sorted(
        node.get("children", []),
        key=lambda c: (-float(c["stall_fraction"]), c["label"]),
    )


def textify_drgpu(tree: dict) -> str:
    """Render the stall tree to a plain-text report, statically.

    Depth-first; at each level children appear in descending stall order
    (ties broken by label); fractions print with one decimal; leaf
    suggestions are listed under their stall category.
    """
    validate_tree(tree)
    pct = lambda n: f"{float(n['stall_fraction']) * 100:.1f}%"

    if not tree.get("children"):
        sentences = [f"All observed stalls fall under {tree['label']} ({pct(tree)} of stalls)."]
        suggestions = tree.get("suggestions", [])
        if suggestions:
            sentences.append("Suggested remedies: " + "; ".join(suggestions) + ".")
        return " ".join(sentences) + "\n"

    lines = [
        "Stall decomposition report (statically rendered from the analyzer's stall tree).",
        f"Root category: {tree['label']} ({pct(tree)} of stalls).",
        "",
    ]

    def walk(node: dict, depth: int) -> None:
        indent = "  " * depth
        lines.append(f"{indent}- {node['label']}: {pct(node)} of stalls")
        for suggestion in node.get("suggestions", []):
            lines.append(f"{indent}  * suggestion: {suggestion}")
        for child in _sorted_children(node):
            walk(child, depth + 1)

    for child in _sorted_children(tree):
        walk(child, 0)
    return "\n".join(lines) + "\n"


def run_adapter(config: AdapterConfig, metrics_csv: Path, lines_csv: Path) -> dict:
    """Invoke the external analyzer; returns the validated stall tree."""
    argv = [config.command] + [
        a.format(metrics_csv=str(metrics_csv), lines_csv=str(lines_csv)) for a in config.args
    ]
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=config.timeout, check=False
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise AdapterFailure(str(exc)) from exc
    if proc.returncode != 0:
        raise AdapterFailure(f"exit {proc.returncode}: {proc.stderr.strip()[:300]}")
    try:
        tree = json.loads(proc.stdout)
    except json.JSONDecodeError as exc:
        raise AdapterFailure(f"adapter emitted invalid JSON: {exc}") from exc
    validate_tree(tree)
    return tree


def report_for_profile(config: AdapterConfig, profile: KernelProfile) -> str:
    """Write the profile's CSVs to a scratch dir, run the adapter, textify."""
    with tempfile.TemporaryDirectory(prefix="drgpu-") as tmp:
        tmp_path = Path(tmp)
        metrics_csv = tmp_path / f"{profile.id}.metrics.csv"
        metrics_csv.write_text(serialize_metrics_csv(list(profile.metrics.values())), encoding="utf-8")
        lines_csv = tmp_path / f"{profile.id}.lines.csv"
        rows = ["file,line,metric,value"]
        for rec in profile.line_records or ():
            for name, value in rec.metrics.items():
                rows.append(f"{rec.file},{rec.line},{name},{value}")
        lines_csv.write_text("\n".join(rows) + "\n", encoding="utf-8")
        tree = run_adapter(config, metrics_csv, lines_csv)
    return textify_drgpu(tree)

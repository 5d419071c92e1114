from __future__ import annotations

import json
from pathlib import Path

import pytest

from perfexplain.ingest import load_bundle, make_metric
from perfexplain.model import (
    BundleManifest,
    KernelProfile,
    KnobDecl,
    ProfileBundle,
    RunConfig,
    SourceFile,
)

FIXTURES = Path(__file__).parent / "fixtures"
GAUSSIAN_DIR = FIXTURES / "gaussian"
GAUSSIAN_CASSETTE = FIXTURES / "cassettes" / "gaussian.json"


@pytest.fixture()
def gaussian_bundle():
    return load_bundle(GAUSSIAN_DIR)


def synth_profile(
    pid: str,
    metric_values: dict[str, float | str] | None = None,
    knobs: dict | None = None,
    gpu_arch: str = "H100",
    app_name: str = "app",
    kernel_name: str = "kern",
) -> KernelProfile:
    values = metric_values or {"m_alpha": 1.0, "m_beta": 2.0}
    metrics = {name: make_metric(name, None, value) for name, value in values.items()}
    return KernelProfile(
        id=pid,
        kernel_name=kernel_name,
        app_name=app_name,
        config=RunConfig(profile_id=pid, gpu_arch=gpu_arch, knobs=dict(knobs or {})),
        metrics=metrics,
    )


def synth_bundle(
    num_profiles: int = 1,
    num_sources: int = 1,
    metric_values: dict[str, float | str] | None = None,
    knob_decls: tuple[KnobDecl, ...] = (),
    defaults: dict | None = None,
    profile_knobs: list[dict] | None = None,
) -> ProfileBundle:
    """Small in-memory bundle; profile ids sort lexicographically (p00 < p01 ...)."""
    profiles = tuple(
        synth_profile(
            f"p{i:02d}",
            metric_values=metric_values,
            knobs=(profile_knobs[i] if profile_knobs else {k.name: (defaults or {})[k.name] for k in knob_decls}),
        )
        for i in range(num_profiles)
    )
    sources = tuple(
        SourceFile(path=f"src{i:02d}.cu", content=f"__global__ void k{i}() {{ /* work */ }}\n")
        for i in range(num_sources)
    )
    manifest = BundleManifest(
        app_name="app", kernel_name="kern", knobs=knob_decls, defaults=dict(defaults or {})
    )
    return ProfileBundle(manifest=manifest, profiles=profiles, sources=sources)


XSBENCH_GRID_TYPES = ("unionized", "hash", "nuclide")
XSBENCH_BLOCK_SIZES = (32, 64, 128, 256, 1024)
XSBENCH_MAX_REGISTERS = (32, 48, 64, 96, 128)


def write_xsbench_dir(root: Path, count: int = 75) -> Path:
    """Bundle directory in the XSBench shape: grid type x block size x register
    cap, defaults unionized/128/64. 3 x 5 x 5 = 75 profiles at full size."""
    combos = [
        (g, b, r)
        for g in XSBENCH_GRID_TYPES
        for b in XSBENCH_BLOCK_SIZES
        for r in XSBENCH_MAX_REGISTERS
    ][:count]
    profiles_meta = {}
    profiles_dir = root / "profiles"
    profiles_dir.mkdir(parents=True)
    for grid, block, regs in combos:
        pid = f"xs-{grid}-b{block:04d}-r{regs:03d}"
        profiles_meta[pid] = {
            "gpu_arch": "H100",
            "knobs": {"grid_type": grid, "block_size": block, "max_registers": regs},
        }
        (profiles_dir / f"{pid}.metrics.csv").write_text(
            "metric,unit,value\n"
            f"gpu__time_duration,us,{100 + block / 8 + regs}\n"
            "sm__throughput,%,41.0\n"
            "dram__throughput,%,55.5\n",
            encoding="utf-8",
        )
    manifest = {
        "app_name": "xsbench",
        "kernel_name": "xs_lookup_kernel_baseline",
        "knobs": [
            {"name": "grid_type", "type": "categorical"},
            {"name": "block_size", "type": "numeric"},
            {"name": "max_registers", "type": "numeric"},
        ],
        "defaults": {"grid_type": "unionized", "block_size": 128, "max_registers": 64},
        "profiles": profiles_meta,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    src = root / "src"
    src.mkdir()
    (src / "lookup.cu").write_text(
        "__global__ void xs_lookup_kernel_baseline(const double *grid, double *out) {\n"
        "    int i = blockIdx.x * blockDim.x + threadIdx.x;\n"
        "    out[i] = grid[i] * 2.0;\n"
        "}\n",
        encoding="utf-8",
    )
    return root

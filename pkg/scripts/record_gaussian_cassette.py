#!/usr/bin/env python3
"""Regenerate the checked-in gaussian cassette from the scripted playbook.

Run after changing any prompt template (replay hashing covers prompt text):

    python scripts/record_gaussian_cassette.py
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from gaussian_playbook import record_gaussian_cassette  # noqa: E402

if __name__ == "__main__":
    bundle_dir = ROOT / "tests" / "fixtures" / "gaussian"
    out = ROOT / "tests" / "fixtures" / "cassettes" / "gaussian.json"
    golden = ROOT / "tests" / "fixtures" / "golden" / "gaussian-report.md"
    cassette = record_gaussian_cassette(bundle_dir, out, golden_report_path=golden)
    print(f"wrote {out} ({len(cassette.entries)} entries)")
    print(f"wrote {golden}")

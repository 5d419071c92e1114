"""Stub stall-tree analyzer for tests and offline demos.

Usage: ``python -m perfexplain.drgpu_stub <metrics.csv> <lines.csv>``

Emits a small fixed-shape stall tree derived only from the metrics CSV row
count, so output is deterministic for a given profile. Not a performance
model.
"""

from __future__ import annotations

import json
import sys


def build_tree(metric_rows: int) -> dict:
    heavy = 0.6 if metric_rows % 2 == 0 else 0.7
    return {
        "label": "warp stalls",
        "stall_fraction": 1.0,
        "children": [
            {
                "label": "long scoreboard",
                "stall_fraction": heavy,
                "suggestions": [
                    "improve global memory coalescing",
                    "prefetch reused global data into shared memory or registers",
                ],
            },
            {
                "label": "barrier",
                "stall_fraction": round(1.0 - heavy, 3),
                "suggestions": ["remove barriers that no data dependency requires"],
            },
        ],
    }


def main(argv: list[str]) -> int:
    if len(argv) < 2:
        print("usage: drgpu_stub <metrics.csv> <lines.csv>", file=sys.stderr)
        return 2
    try:
        with open(argv[1], encoding="utf-8") as fh:
            rows = max(0, sum(1 for _ in fh) - 1)
    except OSError as exc:
        print(f"cannot read metrics csv: {exc}", file=sys.stderr)
        return 1
    json.dump(build_tree(rows), sys.stdout)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))

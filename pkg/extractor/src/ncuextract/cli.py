"""CLI: convert binary profiler reports into bundle JSON.

    ncu-extract --reports "runs/*.ncu-rep" --src kernel-src/ \
        --manifest overrides.json [--lines "runs/*.lines.csv"] --out bundle.json
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import sys

from .errors import ExtractError
from .extract import extract_bundle, load_manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncu-extract",
        description="Extract per-kernel metrics from binary profiler reports into "
        "the canonical profile-bundle JSON.",
    )
    parser.add_argument("--reports", required=True,
                        help="glob of .ncu-rep report files (one profile per file)")
    parser.add_argument("--src", required=True, help="kernel source tree to embed")
    parser.add_argument("--manifest", required=True,
                        help="overrides JSON: app/kernel names, knob schema, defaults, "
                        "per-profile knob values")
    parser.add_argument("--lines", help="glob of line-level CSV exports (GUI wide format "
                        "or canonical file,line,metric,value)")
    parser.add_argument("--out", help="write bundle JSON here (default: stdout)")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    report_paths = sorted(glob.glob(args.reports))
    if not report_paths:
        print(f"error: --reports matched no files: {args.reports!r}", file=sys.stderr)
        return 1
    line_paths = sorted(glob.glob(args.lines)) if args.lines else None
    try:
        manifest = load_manifest(args.manifest)
        bundle = extract_bundle(report_paths, args.src, manifest, line_paths)
    except ExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    payload = json.dumps(bundle, indent=2, ensure_ascii=False) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())

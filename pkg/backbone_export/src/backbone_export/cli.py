"""CLI for the backbone export tool: export graphs, then certify them."""

from __future__ import annotations

import argparse
import json
import shlex
import sys

from .export import (
    REQUIRED_DIMS,
    WidthMismatchError,
    export,
    read_manifest,
    validate,
    write_manifest,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="backbone-export",
        description="Export ResNet50/EfficientNet/RegNet to ONNX feature graphs and certify them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="export backbone graphs + parity fixtures + manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--backbone", action="append", choices=list(REQUIRED_DIMS),
                   help="repeatable; default: all three")
    p.add_argument("--weights", choices=["random", "pretrained"], default="random")
    p.add_argument("--parity-seed", type=int, default=42, dest="parity_seed")

    p = sub.add_parser("validate", help="dual-runtime parity check of exported graphs")
    p.add_argument("--out", required=True, help="directory holding the export manifest")
    p.add_argument("--backbone", action="append", choices=list(REQUIRED_DIMS))
    p.add_argument("--runner-cmd", dest="runner_cmd",
                   help="external runner argv prefix, e.g. 'node runtime/dist/validate.js'")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export":
            backbones = args.backbone or list(REQUIRED_DIMS)
            records = [
                export(bid, args.out, weights=args.weights, parity_seed=args.parity_seed)
                for bid in backbones
            ]
            write_manifest(records, args.out)
            for r in records:
                print(f"exported {r.backbone_id}: {r.graph_file} ({r.output_dim}-d, "
                      f"weights {r.source}, sha256 {r.weight_sha256[:12]}...)")
            return 0

        records = read_manifest(args.out)
        if args.backbone:
            records = [r for r in records if r.backbone_id in args.backbone]
        runner = shlex.split(args.runner_cmd) if args.runner_cmd else None
        all_pass = True
        reports = []
        for record in records:
            report = validate(args.out, record, runner_argv=runner)
            reports.append(report)
            record.validation = "passed" if report["pass"] else "failed"
            all_pass &= report["pass"]
            print(json.dumps(report))
        write_manifest(records, args.out)
        return 0 if all_pass else 1
    except (WidthMismatchError, RuntimeError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

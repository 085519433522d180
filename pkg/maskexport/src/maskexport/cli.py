"""Command line for the detection exporter: export and validate."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ALL_CLASSES, ExportConfig
from .export import export
from .validate import validate


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskexport", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_exp = sub.add_parser("export", help="run the detector over a sequence dir")
    p_exp.add_argument("--seq", required=True, help="sequence directory")
    p_exp.add_argument("--out", required=True, help="output JSON-lines file")
    p_exp.add_argument("--threshold", type=float, default=0.7)
    p_exp.add_argument("--classes", default=",".join(ALL_CLASSES),
                       help="comma-separated class whitelist")
    p_exp.add_argument("--weights", default="pretrained",
                       help="'pretrained', 'none' (random init), or a state-dict path")
    p_exp.add_argument("--device", default="cpu")
    p_exp.add_argument("--max-detections", type=int, default=20)
    p_exp.set_defaults(func=cmd_export)

    p_val = sub.add_parser("validate", help="schema-check a detections file")
    p_val.add_argument("--file", required=True)
    p_val.set_defaults(func=cmd_validate)
    return parser


def cmd_export(args) -> int:
    classes = tuple(c.strip() for c in args.classes.split(",") if c.strip())
    cfg = ExportConfig(weights=args.weights, score_threshold=args.threshold,
                       classes=classes, device=args.device,
                       max_detections=args.max_detections)
    return export(args.seq, cfg, args.out)


def cmd_validate(args) -> int:
    report = validate(args.file)
    print(report.summary())
    return 0 if report.ok else 1


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()

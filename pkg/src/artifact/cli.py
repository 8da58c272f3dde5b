"""Command-line interface: synth, train, detect, localize, eval, serve.

All commands with a fixed seed are byte-reproducible run to run. Errors in
inputs (missing files, format mismatches, corrupt weights) exit with code 2
and a message on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .models import MODEL_KINDS
from .synth import DatasetSpec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artifact",
        description="Artifact detection and localization for single-channel sleep EEG",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with exact ground truth")
    p.add_argument("--spec", required=True, help="dataset spec JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output dataset directory")

    p = sub.add_parser("train", help="train one model on a dataset directory")
    p.add_argument("--arch", required=True, choices=MODEL_KINDS)
    p.add_argument("--data", required=True)
    p.add_argument("--profile", default="toy", choices=("toy", "full"))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="weight file path")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=20)

    p = sub.add_parser("detect", help="per-epoch detection report for one recording")
    p.add_argument("--weights", required=True)
    p.add_argument("--rec", required=True, help="raw recording sidecar (.json)")
    p.add_argument("--out", required=True, help="report JSONL path")
    p.add_argument("--maps", default=None, help="attention maps output (CBAM models)")
    p.add_argument("--arch", default=None, choices=MODEL_KINDS)

    p = sub.add_parser("localize", help="attention-map localization at a threshold")
    p.add_argument("--weights", required=True)
    p.add_argument("--rec", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluation report from detection reports and labels")
    p.add_argument("--reports", required=True, help="directory of *.report.jsonl (+ maps)")
    p.add_argument("--labels", required=True, help="directory of per-recording label JSONL")
    p.add_argument("--out", required=True, help="evaluation JSON path")
    p.add_argument("--plots", default=None, help="directory for SVG figures")
    p.add_argument("--model-name", default="")

    p = sub.add_parser("serve", help="local review service for the browser UI")
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--data", required=True, help="directory with recordings, reports, maps")
    p.add_argument("--host", default="127.0.0.1")

    p = sub.add_parser("arch", help="print a model's layer table")
    p.add_argument("--arch", required=True, choices=MODEL_KINDS)
    p.add_argument("--profile", default="toy", choices=("toy", "full"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    from . import pipeline

    if args.command == "synth":
        spec_dict = json.loads(Path(args.spec).read_text())
        dspec = DatasetSpec.from_dict(spec_dict, seed=args.seed)
        summary = pipeline.synth_dataset(dspec, args.out)
        print(json.dumps(summary))
        return 0

    if args.command == "train":
        summary = pipeline.train_command(
            args.data, args.arch, seed=args.seed, out_path=args.out, profile=args.profile,
            lr=args.lr, batch_size=args.batch_size, max_epochs=args.max_epochs,
            patience=args.patience,
        )
        print(json.dumps(summary))
        return 0

    if args.command == "detect":
        summary = pipeline.detect_command(args.weights, args.rec, args.out,
                                          maps_path=args.maps, arch=args.arch)
        print(json.dumps(summary))
        return 0

    if args.command == "localize":
        summary = pipeline.localize_command(args.weights, args.rec, args.threshold, args.out)
        print(json.dumps(summary))
        return 0

    if args.command == "eval":
        report = pipeline.eval_command(args.reports, args.labels, args.out,
                                       plots_dir=args.plots, model_name=args.model_name)
        print(json.dumps({"auc": report["auc"], "best": report["best"],
                          "localization": report.get("localization", {}).get("best_threshold")}))
        return 0

    if args.command == "serve":
        from .service import run_server

        run_server(args.data, host=args.host, port=args.port)
        return 0

    if args.command == "arch":
        from .models import layer_table

        rows = layer_table(args.arch, args.profile)
        total = sum(r["params"] for r in rows)
        for r in rows:
            print(f"{r['name']:<28} {str(r['shape']):<18} {r['params']:>8}")
        print(f"{'total':<28} {'':<18} {total:>8}")
        return 0

    raise ValueError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())

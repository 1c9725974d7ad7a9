"""Command-line entry point: prepare | init | train | eval | verify | raster.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 data or format error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simnets", description="Similarity networks: train, evaluate and verify.")
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry, e.g. --set train.epochs=30")
    ap.add_argument("--threads", type=int, default=None, help="BLAS thread count")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="normalize images, fit whitening, write a data cache")
    p.add_argument("--data", help="CIFAR-10 binary directory (omit with data.source=synthetic)")
    p.add_argument("--out", required=True, help="cache directory")

    p = sub.add_parser("init", help="build an initial model checkpoint")
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")

    p = sub.add_parser("train", help="train a checkpoint on the cached training split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True, help="trained checkpoint path")
    p.add_argument("--history", help="per-epoch CSV (epoch,loss,train_acc,val_acc,seconds)")

    p = sub.add_parser("eval", help="accuracy and confusion matrix on a cached split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--confusion", help="write the confusion matrix CSV here")

    p = sub.add_parser("verify", help="run a property suite")
    p.add_argument("suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=float, default=None, help="order for the psd witness search")
    p.add_argument("--json", action="store_true", help="print the report as JSON")

    p = sub.add_parser("raster", help="decision regions of a two-template weighted l_p rule as CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--heavy", type=float, default=8.0, help="weight on every coordinate of template 0")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--bounds", type=float, nargs=4, default=(-6.0, 6.0, -6.0, 6.0), metavar=("XMIN", "XMAX",
                                                                                        "YMIN", "YMAX"))
    p.add_argument("--resolution", type=int, default=201)
    return ap


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise SystemExit(EXIT_USAGE)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    # must precede the first numpy import to reach the BLAS pool
    _set_threads(args.threads)

    from . import pipeline
    from .data import DataFormatError
    from .network import PatchLabelingNet

    try:
        cfg = pipeline.load_config(args.config, args.set)
    except (pipeline.ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "prepare":
            prepared = pipeline.prepare(cfg, args.data, args.out)
            print(f"prepared {len(prepared.train)} train / {len(prepared.test)} test images in {args.out}")
        elif args.command == "init":
            net = pipeline.init_model(cfg, pipeline.load_prepared(args.cache))
            net.save(args.out)
            print(f"wrote {cfg['init']['method']} checkpoint {args.out}")
        elif args.command == "train":
            prepared = pipeline.load_prepared(args.cache)
            net = PatchLabelingNet.load(args.checkpoint)
            hist = pipeline.train_model(net, prepared, cfg, history_path=args.history,
                                        log=lambda r: print(f"epoch {r.epoch}: loss={r.loss:.4f} "
                                                            f"train_acc={r.train_acc:.4f} val_acc={r.val_acc:.4f} "
                                                            f"({r.seconds:.1f}s)", flush=True))
            net.save(args.out)
            print(f"trained {len(hist)} epochs, wrote {args.out}")
        elif args.command == "eval":
            prepared = pipeline.load_prepared(args.cache)
            data = prepared.test if args.split == "test" else prepared.train
            report = pipeline.evaluate_model(PatchLabelingNet.load(args.checkpoint), data)
            if args.confusion:
                report.confusion_csv(args.confusion)
            print(json.dumps({"accuracy": report.accuracy, "count": int(report.confusion.sum())}))
        elif args.command == "verify":
            return _verify(args)
        elif args.command == "raster":
            from .kernels import decision_region_raster
            from .verify import two_template_classifier

            clf = two_template_classifier([[-1.0, 0.0], [1.5, 0.5]], [[args.heavy] * 2, [1.0, 1.0]], p=args.p)
            raster = decision_region_raster(clf, tuple(args.bounds), args.resolution)
            raster.to_csv(args.out)
            print(f"wrote {args.out}; template 0 region bounded: {not raster.touches_boundary(0)}")
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except pipeline.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def _verify(args) -> int:
    from .verify import SUITES, run_suite

    if args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_USAGE
    kwargs = {}
    if args.p is not None:
        if args.suite != "psd":
            print("--p only applies to the psd suite", file=sys.stderr)
            return EXIT_USAGE
        kwargs["p_witness"] = args.p
    report = run_suite(args.suite, seed=args.seed, **kwargs)
    if args.json:
        print(json.dumps({"suite": report.suite, "passed": report.passed, "results": report.to_rows()}, indent=1))
    else:
        print(report.format())
    return EXIT_OK if report.passed else EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())

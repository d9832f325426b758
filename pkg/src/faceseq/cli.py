"""Command-line front end.

Subcommands:
    synth       generate a synthetic dataset on disk
    train       fit one method on a dataset's training folds and serialize it
    eval        load serialized models and score the held-out fold
    cv          full cross-validation with report output
    gabor-dump  write kernel-bank responses for inspection

Exit codes: 0 success, 1 validation error (bad arguments, bad config,
malformed dataset), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import gabor
from . import pipeline as pl


class _Parser(argparse.ArgumentParser):
    """Argument errors are validation errors: usage + exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="faceseq",
                     description="facial expression sequence recognition")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p, data=False, model=False, method=False, seed=False,
               out_default="."):
        if data:
            p.add_argument("data_dir", nargs="?" if data == "optional" else None,
                           default=None if data == "optional" else argparse.SUPPRESS,
                           help="dataset root (class directories inside)")
        if model:
            p.add_argument("model_dir", help="directory written by train")
        p.add_argument("--config", metavar="PATH",
                       help="flat key=value config file; defaults otherwise")
        if method:
            p.add_argument("--method", choices=pl.METHODS, default=None,
                           help="pipeline variant (cv default: all)")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="generator seed (default: config seed)")
        p.add_argument("--out-dir", metavar="DIR", default=out_default,
                       help=f"output directory (default: {out_default})")

    p = sub.add_parser("synth", help="write a synthetic dataset")
    common(p, seed=True, out_default="dataset")

    p = sub.add_parser("train", help="fit and serialize one method")
    common(p, data=True, method=True, out_default="models")

    p = sub.add_parser("eval", help="score serialized models on the held-out fold")
    common(p, data=True, model=True)

    p = sub.add_parser("cv", help="cross-validate (data dir optional: synthesizes)")
    common(p, data="optional", method=True, seed=True)

    p = sub.add_parser("gabor-dump", help="write kernel responses of one sequence")
    common(p, data="optional", seed=True, out_default="gabor")
    return parser


def _load_config(args) -> pl.RunConfig:
    if getattr(args, "config", None):
        return pl.load_config(args.config)
    return pl.RunConfig()


def _records(args, config: pl.RunConfig) -> list:
    """Dataset records: ingested when a directory was given, else synthetic."""
    data_dir = getattr(args, "data_dir", None)
    if data_dir is not None:
        return pl.ingest_dataset(data_dir, config)
    seed = args.seed if args.seed is not None else config.seed
    return pl.gen_synthetic(config, seed)


def _cmd_synth(args) -> int:
    config = _load_config(args)
    seed = args.seed if args.seed is not None else config.seed
    records = pl.gen_synthetic(config, seed)
    pl.write_dataset(records, args.out_dir)
    print(f"wrote {len(records)} sequences to {args.out_dir}")
    return 0


def _cmd_train(args) -> int:
    config = _load_config(args)
    method = args.method or "proposed-geo"
    records = pl.ingest_dataset(args.data_dir, config)
    fold_labels = pl.assign_folds(records, config.folds)
    train_records = [r for r, k in zip(records, fold_labels) if k != 0]
    fitted = pl.train_models(train_records, config, method)
    pl.save_models(args.out_dir, fitted, config)
    print(f"trained {method} on {len(train_records)} sequences "
          f"(fold 0 of {config.folds} held out); models in {args.out_dir}")
    return 0


def _cmd_eval(args) -> int:
    fitted, config = pl.load_models(args.model_dir)
    records = pl.ingest_dataset(args.data_dir, config)
    fold_labels = pl.assign_folds(records, config.folds)
    test_records = [r for r, k in zip(records, fold_labels) if k == 0]
    cm = pl.evaluate_models(fitted, test_records, config)
    os.makedirs(args.out_dir, exist_ok=True)
    lines = [f"method={fitted.method}",
             f"rate={cm.rate():.2f}",
             f"total={cm.total:.10g}",
             "counts=" + ";".join(f"{v:.10g}" for v in cm.counts.ravel())]
    with open(os.path.join(args.out_dir, "report.txt"), "w",
              encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(pl.format_confusion(cm, title=f"[{fitted.method}] held-out fold 0"))
    return 0


def _cmd_cv(args) -> int:
    config = _load_config(args)
    methods = (args.method,) if args.method else None
    records = _records(args, config)
    result = pl.cross_validate(records, config, methods=methods)
    text = pl.write_report(args.out_dir, result)
    print(text, end="")
    return 0


def _cmd_gabor_dump(args) -> int:
    config = _load_config(args)
    records = _records(args, config)
    if not records:
        raise pl.PipelineError("dataset is empty; nothing to dump")
    rec = records[0]
    bank = gabor.make_bank(config.gabor)
    responses = gabor.represent_sequence(bank, rec.frames)
    os.makedirs(args.out_dir, exist_ok=True)
    gabor.write_response_dump(os.path.join(args.out_dir, "responses.bin"),
                              responses)
    # per-channel preview of the first frame, min/max stretched
    for c in range(responses.shape[0]):
        img = responses[c, 0]
        lo, hi = float(img.min()), float(img.max())
        flat = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
        pl.write_pgm(os.path.join(args.out_dir, f"response_{c:02d}.pgm"), flat)
    print(f"dumped {responses.shape[0]} channel responses of sequence "
          f"{rec.id!r} to {args.out_dir}")
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "cv": _cmd_cv,
    "gabor-dump": _cmd_gabor_dump,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except (pl.PipelineError, gabor.InvalidConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (FileNotFoundError, NotADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        raise
    except Exception as e:
        print(f"failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

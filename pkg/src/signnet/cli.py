"""Command line interface.

Subcommands: stats, split, train, eval, infer, bench.  Exit codes: 0 on
success, 1 on usage errors, 2 on data/format errors, 3 on numeric
divergence.  Report-producing commands render a matplotlib figure next to
each CSV they write.
"""

from __future__ import annotations

import argparse
import os
import sys

from .data import (
    read_split_csv,
    scan_manifest,
    stratified_split,
    write_split_csv,
)
from .errors import (
    CheckpointError,
    ConfigError,
    FormatError,
    NumericError,
    ParameterError,
    ShapeError,
    StateError,
    TrainingDiverged,
    UsageError,
)
from .models import load_checkpoint
from .training import (
    TrainConfig,
    bench_inference,
    evaluate,
    infer_single,
    load_subset,
    train_run,
    write_curves_csv,
)

_DATA_ERRORS = (
    CheckpointError,
    ConfigError,
    FormatError,
    ParameterError,
    ShapeError,
    StateError,
    FileNotFoundError,
    NotADirectoryError,
    IsADirectoryError,
    PermissionError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated ratios")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="signnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_stats = sub.add_parser("stats", help="print the class histogram as CSV")
    p_stats.add_argument("--data", required=True, help="dataset root directory")
    p_stats.add_argument("--fig", help="also render a histogram figure to this path")

    p_split = sub.add_parser("split", help="write a stratified split CSV")
    p_split.add_argument("--data", required=True)
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--ratios", type=_ratios, default=(0.70, 0.15, 0.15))
    p_split.add_argument("--out", required=True, help="split CSV path")

    p_train = sub.add_parser("train", help="train a model and keep the best checkpoint")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--splits", required=True, help="split CSV from `split`")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--model", default="cnn",
                         help="ann | cnn | resnet18 | path to a config file")
    p_train.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    p_train.add_argument("--lr", type=float, default=0.01)
    p_train.add_argument("--epochs", type=int, default=20)
    p_train.add_argument("--batch", type=int, default=64)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--input-side", type=int, default=64)
    p_train.add_argument("--augment", choices=("none", "crop-jitter"), default="none")
    p_train.add_argument("--no-dropout", action="store_true",
                         help="disable dropout layers for this run")
    p_train.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                         default=True)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split subset")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--splits", required=True)
    p_eval.add_argument("--subset", choices=("train", "val", "test"), default="test")
    p_eval.add_argument("--out", required=True, help="output directory")

    p_infer = sub.add_parser("infer", help="classify one image")
    p_infer.add_argument("--ckpt", required=True)
    p_infer.add_argument("--image", required=True)
    p_infer.add_argument("--crop", type=float, default=1.0,
                         help="center-crop fraction before resizing")
    p_infer.add_argument("--probs", action="store_true",
                         help="also print the full probability row")

    p_bench = sub.add_parser("bench", help="time single-image inference")
    p_bench.add_argument("--ckpt", required=True)
    p_bench.add_argument("--image", required=True)
    p_bench.add_argument("--iterations", type=int, default=100)

    return parser


def _cmd_stats(args) -> int:
    _, histogram = scan_manifest(args.data)
    sys.stdout.write(histogram.to_csv_text())
    if args.fig:
        from .figures import save_histogram_figure

        save_histogram_figure(histogram, args.fig)
    return 0


def _cmd_split(args) -> int:
    entries, _ = scan_manifest(args.data)
    split = stratified_split(entries, args.ratios, args.seed)
    write_split_csv(split, args.out)
    counts = split.counts()
    print(f"train {counts['train']} val {counts['val']} test {counts['test']}")
    return 0


def _cmd_train(args) -> int:
    config = TrainConfig(
        model=args.model,
        optimizer=args.optimizer,
        lr=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
        input_side=args.input_side,
        dropout=not args.no_dropout,
        augment=args.augment,
        deterministic=args.deterministic,
    )
    entries, _ = scan_manifest(args.data)
    membership = read_split_csv(args.splits)
    os.makedirs(args.out, exist_ok=True)
    try:
        report = train_run(config, entries, membership, args.data, args.out, log=print)
    except TrainingDiverged as exc:
        if exc.report is not None and exc.report.epochs_run:
            write_curves_csv(exc.report, os.path.join(args.out, "curves.csv"))
        print(str(exc), file=sys.stderr)
        return 3
    write_curves_csv(report, os.path.join(args.out, "curves.csv"))
    from .figures import save_curves_figure

    save_curves_figure(report, os.path.join(args.out, "curves.png"))
    print(f"best epoch {report.best_epoch} val_loss {report.best_val_loss:.6g}")
    return 0


def _cmd_eval(args) -> int:
    model = load_checkpoint(args.ckpt)
    entries, _ = scan_manifest(args.data)
    membership = read_split_csv(args.splits)
    side = model.graph.input_shape[1]
    xs, ys = load_subset(entries, membership, args.subset, args.data, side)
    accuracy, matrix = evaluate(model, xs, ys)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "confusion.csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(matrix.to_csv_text())
    from .figures import save_confusion_figure

    save_confusion_figure(matrix, os.path.join(args.out, "confusion.png"))
    print(f"accuracy {accuracy:.6g} over {matrix.total} samples")
    return 0


def _cmd_infer(args) -> int:
    name, prob, probs = infer_single(args.ckpt, args.image, args.crop)
    print(f"{name} {prob:.6g}")
    if args.probs:
        print(",".join(format(float(p), ".6g") for p in probs))
    return 0


def _cmd_bench(args) -> int:
    report = bench_inference(args.ckpt, args.image, args.iterations)
    print(
        f"iterations {report.iterations} mean_ms {report.mean_ms:.3f} "
        f"median_ms {report.median_ms:.3f} p95_ms {report.p95_ms:.3f}"
    )
    return 0


_COMMANDS = {
    "stats": _cmd_stats,
    "split": _cmd_split,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "bench": _cmd_bench,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"signnet: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(str(exc), file=sys.stderr)
        return 3
    except NumericError as exc:
        print(str(exc), file=sys.stderr)
        return 3
    except _DATA_ERRORS as exc:
        print(f"signnet: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())

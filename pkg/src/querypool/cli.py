"""Command-line entry point: run, compare, gradcheck, inspect, serve.

Exit codes: 0 success, 2 bad flags, 3 data errors, 4 training divergence,
5 gradient-check threshold breach.

MNIST files are looked up under --mnist-dir, then the QUERYPOOL_MNIST_DIR
environment variable, then ./data/mnist. Both raw and .gz files work.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .data import DataError, Dataset, concat, load_mnist, synth_blobs
from .engine import (
    RunConfig,
    RunTrace,
    compare_runs,
    initial_split,
    run,
    simulated_oracle,
)
from .idx import IdxError, parse_idx_images, parse_idx_labels, read_idx_bytes
from .model import NonFiniteLoss, TrainHyper, grad_check, init_model
from .report import (
    AxesConfig,
    CurveSeries,
    emit_csv,
    emit_curves_svg,
    emit_json,
    format_summary_table,
    summarize,
    summary_to_json,
)
from .uncertainty import Metric

MNIST_DIR_ENV = "QUERYPOOL_MNIST_DIR"
_DEFAULT_MNIST_DIR = "data/mnist"

_MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_GRADCHECK = 5

# protocol presets, scaled to desk-size pools: per-round budget as a fraction
# of the training pool, and the matching minibatch size
_PRESETS = {
    "mnist-paper": dict(
        data="mnist", arch="mlp", hidden=128, minibatch=128, pool_size=6000,
        budget_fraction=0.053, rounds=15, epochs_per_round=10, lr=0.2,
    ),
    "blobs-paper": dict(
        data="blobs", arch="mlp", hidden=128, minibatch=64, pool_size=4000,
        budget_fraction=0.042, rounds=20, epochs_per_round=10, lr=0.2,
        blobs_classes=10, blobs_dim=32, blobs_per_class=500, blobs_spread=0.35,
    ),
}


def _mnist_path(directory: Path, name: str) -> Path:
    for candidate in (directory / name, directory / (name + ".gz")):
        if candidate.exists():
            return candidate
    raise DataError(f"MNIST file {name}[.gz] not found in {directory}")


def resolve_mnist_dir(flag_value: str | None) -> Path:
    if flag_value:
        return Path(flag_value)
    return Path(os.environ.get(MNIST_DIR_ENV, _DEFAULT_MNIST_DIR))


def _parse_classes(text: str | None) -> set[int] | None:
    if text is None:
        return None
    try:
        classes = {int(c) for c in text.split(",") if c.strip() != ""}
    except ValueError:
        raise DataError(f"--classes expects comma-separated ints, got {text!r}")
    if len(classes) < 2:
        raise DataError("--classes needs at least two classes")
    return classes


def load_datasets(args) -> tuple[Dataset, np.ndarray | None]:
    """Build the working dataset; MNIST pins its official test files as S."""
    if args.data == "mnist":
        directory = resolve_mnist_dir(args.mnist_dir)
        classes = _parse_classes(args.classes)
        train = load_mnist(
            _mnist_path(directory, _MNIST_FILES["train"][0]),
            _mnist_path(directory, _MNIST_FILES["train"][1]),
            class_filter=classes,
        )
        test = load_mnist(
            _mnist_path(directory, _MNIST_FILES["test"][0]),
            _mnist_path(directory, _MNIST_FILES["test"][1]),
            class_filter=classes,
        )
        combined, test_ids = concat(train, test)
        return combined, test_ids
    if args.classes is not None:
        raise DataError("--classes applies to --data mnist only")
    dataset = synth_blobs(
        num_classes=args.blobs_classes,
        dim=args.blobs_dim,
        per_class=args.blobs_per_class,
        spread=args.blobs_spread,
        rng_seed=args.seed,
    )
    return dataset, None


def build_config(args, dataset: Dataset, test_ids: np.ndarray | None, metric: Metric) -> RunConfig:
    if test_ids is not None:
        test_size = int(test_ids.size)
    else:
        test_size = args.test_size if args.test_size is not None else max(1, len(dataset) // 5)
    available = len(dataset) - (test_ids.size if test_ids is not None else test_size)
    pool_size = args.pool_size
    if pool_size is not None:
        pool_size = min(pool_size, available - args.seed_size)
    k = args.k
    if k is None:
        base = pool_size if pool_size is not None else max(1, available - args.seed_size)
        k = max(1, round(args.budget_fraction * base))
    return RunConfig(
        metric=metric,
        per_round_k=k,
        seed_size=args.seed_size,
        test_size=test_size,
        max_rounds=args.rounds,
        epsilon=args.epsilon,
        hyper=TrainHyper(
            learning_rate=args.lr,
            minibatch_size=args.minibatch,
            epochs_per_round=args.epochs_per_round,
            l2=args.l2,
        ),
        arch=args.arch,
        hidden=args.hidden,
        rng_seed=args.seed,
        cold_start=args.cold_start,
        scan=args.scan,
        scan_batch=args.scan_batch,
        pool_size=pool_size,
    )


def _write_run_outputs(out: Path, traces: list[RunTrace], threshold: float) -> None:
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(traces, out / "trace.csv")
    emit_json(traces, out / "trace.json")

    by_metric: dict[str, list[RunTrace]] = {}
    for t in traces:
        by_metric.setdefault(t.metric, []).append(t)

    acc_series, loss_series = [], []
    for metric, group in sorted(by_metric.items()):
        rounds = [r.round for r in group[0].records]
        acc = np.array([[r.test_accuracy for r in t.records] for t in group])
        loss = np.array([[r.train_loss for r in t.records] for t in group])
        band = None
        if len(group) > 1:
            band = list(zip(rounds, acc.min(axis=0), acc.max(axis=0)))
        acc_series.append(CurveSeries(metric, list(zip(rounds, acc.mean(axis=0))), band))
        loss_series.append(CurveSeries(metric, list(zip(rounds, loss.mean(axis=0)))))
    emit_curves_svg(acc_series, AxesConfig(y_label="test accuracy"), out / "accuracy.svg")
    emit_curves_svg(loss_series, AxesConfig(y_label="train loss"), out / "loss.svg")

    first = traces[0]
    per_class = [
        CurveSeries(
            label=name,
            points=[(r.round, float(r.per_class_accuracy[c])) for r in first.records],
        )
        for c, name in enumerate(first.class_names)
    ]
    emit_curves_svg(
        per_class,
        AxesConfig(y_label="per-class test accuracy", title=f"{first.run_id}"),
        out / "per_class_accuracy.svg",
    )

    summaries = summarize(traces, threshold=threshold)
    (out / "summary.json").write_text(summary_to_json(summaries, threshold) + "\n")
    (out / "summary.txt").write_text(format_summary_table(summaries, threshold) + "\n")


def cmd_run(args) -> int:
    dataset, test_ids = load_datasets(args)
    metric = Metric.from_string(args.metric)
    config = build_config(args, dataset, test_ids, metric)
    parts = initial_split(dataset, config, test_ids)
    trace = run(config, dataset, simulated_oracle(dataset), parts=parts, workers=args.workers)
    _write_run_outputs(Path(args.out), [trace], args.threshold)
    final = trace.records[-1]
    print(
        f"run {trace.run_id}: {len(trace.records)} rounds, stop={trace.stop_reason}, "
        f"labeled={final.labeled_count}, test_accuracy={final.test_accuracy:.4f}"
    )
    print(f"outputs written to {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    dataset, test_ids = load_datasets(args)
    if args.metrics.strip().lower() == "all":
        metrics = [Metric.LMU, Metric.SMU, Metric.LCU, Metric.ENTROPY, Metric.RANDOM]
    else:
        metrics = [Metric.from_string(m) for m in args.metrics.split(",")]
    config = build_config(args, dataset, test_ids, metrics[0])
    seeds = [args.seed + i for i in range(args.replicates)]
    result = compare_runs(
        dataset, metrics, seeds, config, test_ids=test_ids, workers=args.workers
    )
    _write_run_outputs(Path(args.out), result.traces, args.threshold)
    print(format_summary_table(summarize(result.traces, args.threshold), args.threshold))
    print(f"outputs written to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    threshold = args.threshold if args.threshold is not None else (
        1e-6 if args.arch == "softmax" else 1e-4
    )
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    worst_draw = -1
    for draw in range(args.draws):
        model = init_model(
            args.arch, args.dim, args.num_classes,
            rng_seed=int(rng.integers(0, 2**31)), hidden=args.hidden,
        )
        x = rng.random(args.dim)
        y = int(rng.integers(0, args.num_classes))
        err = grad_check(model, x, y, rng_seed=draw)
        if err > worst:
            worst, worst_draw = err, draw
    print(
        f"gradcheck {args.arch}: {args.draws} draws, worst rel err {worst:.3e} "
        f"(draw {worst_draw}), threshold {threshold:.0e}"
    )
    if worst >= threshold:
        print("FAIL: threshold breached", file=sys.stderr)
        return EXIT_GRADCHECK
    return EXIT_OK


def cmd_inspect(args) -> int:
    if args.images or args.labels:
        if not (args.images and args.labels):
            raise DataError("--images and --labels must be given together")
        image_path, label_path = Path(args.images), Path(args.labels)
    else:
        directory = resolve_mnist_dir(args.mnist_dir)
        names = _MNIST_FILES[args.split]
        image_path, label_path = _mnist_path(directory, names[0]), _mnist_path(directory, names[1])

    count, rows, cols, _ = parse_idx_images(read_idx_bytes(image_path))
    label_count, labels = parse_idx_labels(read_idx_bytes(label_path))
    if count != label_count:
        raise DataError(f"{count} images but {label_count} labels")

    classes = _parse_classes(args.classes)
    if classes is not None:
        kept = sorted(classes)
        labels = labels[np.isin(labels, kept)]
        count = labels.size
    else:
        kept = sorted(np.unique(labels).tolist())
    print(f"{count} examples, {rows}x{cols}, {len(kept)} classes")
    hist = np.bincount(labels, minlength=10)
    for c in kept:
        print(f"  class {c}: {hist[c]}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    dataset, test_ids = load_datasets(args)
    app = create_app(
        dataset,
        test_ids=test_ids,
        capacity=args.capacity,
        snapshot_dir=Path(args.snapshot_dir) if args.snapshot_dir else None,
        ui_dir=Path(args.ui_dir) if args.ui_dir else None,
    )
    print(f"labeling service on http://{args.bind}:{args.port}/ (API under /v1)")
    uvicorn.run(app, host=args.bind, port=args.port, log_level="warning")
    return EXIT_OK


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", choices=["mnist", "blobs"], default="mnist",
                   help="dataset: official MNIST files or synthetic blobs")
    p.add_argument("--mnist-dir", default=None,
                   help=f"directory with MNIST idx files (default: ${MNIST_DIR_ENV} or {_DEFAULT_MNIST_DIR})")
    p.add_argument("--classes", default=None,
                   help="keep only these MNIST classes, e.g. 0,1 for the binary task")
    p.add_argument("--blobs-classes", type=int, default=2)
    p.add_argument("--blobs-dim", type=int, default=8)
    p.add_argument("--blobs-per-class", type=int, default=500)
    p.add_argument("--blobs-spread", type=float, default=0.35)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    _add_data_flags(p)
    p.add_argument("--k", type=int, default=None,
                   help="examples labeled per round (default: budget fraction of the pool)")
    p.add_argument("--budget-fraction", type=float, default=0.05,
                   help="per-round labeling budget as a pool fraction when --k is unset")
    p.add_argument("--seed-size", type=int, default=32)
    p.add_argument("--rounds", type=int, default=10, help="maximum selection rounds")
    p.add_argument("--epsilon", type=float, default=None,
                   help="training-error bound; stop once 1 - train_accuracy <= epsilon")
    p.add_argument("--epochs-per-round", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--minibatch", type=int, default=128)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--arch", choices=["softmax", "mlp"], default="softmax")
    p.add_argument("--hidden", type=int, default=128, help="MLP hidden width")
    p.add_argument("--cold-start", action="store_true",
                   help="re-initialize the model every round instead of warm-starting")
    p.add_argument("--scan", choices=["global", "batched"], default="global",
                   help="score the whole pool, or screen it in batches")
    p.add_argument("--scan-batch", type=int, default=None)
    p.add_argument("--pool-size", type=int, default=None,
                   help="subsample the unlabeled pool to this size")
    p.add_argument("--test-size", type=int, default=None,
                   help="held-out test examples (blobs; MNIST uses its official test files)")
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.9,
                   help="accuracy threshold for the rounds-to-threshold summary")
    p.add_argument("--workers", type=int, default=1, help="pool-scoring threads")
    p.add_argument("--preset", choices=sorted(_PRESETS), default=None,
                   help="apply a protocol preset; explicit flags still win")


def _apply_preset(argv: list[str], args) -> None:
    if args.preset is None:
        return
    preset = _PRESETS[args.preset]
    explicit = {a.split("=")[0] for a in argv if a.startswith("--")}

    def given(flag: str) -> bool:
        return f"--{flag}" in explicit

    for attr, value in preset.items():
        flag = attr.replace("_", "-")
        if not given(flag):
            setattr(args, attr, value)
    # a preset's seed set matches its per-round budget unless overridden
    if not given("seed-size") and "budget_fraction" in preset and args.pool_size:
        args.seed_size = max(2, round(preset["budget_fraction"] * args.pool_size))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="querypool",
        description="Pool-based active learning with uncertainty sampling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one metric with the simulated oracle")
    _add_run_flags(p_run)
    p_run.add_argument("--metric", default="entropy",
                       help="lmu | smu | lcu | entropy | random")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run several metrics on shared splits")
    _add_run_flags(p_cmp)
    p_cmp.add_argument("--metrics", default="all",
                       help="comma-separated metric list, or 'all'")
    p_cmp.add_argument("--replicates", type=int, default=3,
                       help="replicate seeds per metric (seed, seed+1, ...)")
    p_cmp.set_defaults(func=cmd_compare)

    p_grad = sub.add_parser("gradcheck", help="verify backprop against central differences")
    p_grad.add_argument("--arch", choices=["softmax", "mlp"], default="softmax")
    p_grad.add_argument("--hidden", type=int, default=128)
    p_grad.add_argument("--dim", type=int, default=64)
    p_grad.add_argument("--num-classes", type=int, default=10)
    p_grad.add_argument("--draws", type=int, default=100)
    p_grad.add_argument("--threshold", type=float, default=None,
                        help="max relative error (default 1e-6 softmax, 1e-4 mlp)")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_ins = sub.add_parser("inspect", help="parse idx files and print dataset facts")
    p_ins.add_argument("--mnist-dir", default=None)
    p_ins.add_argument("--split", choices=["train", "test"], default="train")
    p_ins.add_argument("--images", default=None, help="explicit image file path")
    p_ins.add_argument("--labels", default=None, help="explicit label file path")
    p_ins.add_argument("--classes", default=None)
    p_ins.set_defaults(func=cmd_inspect)

    p_srv = sub.add_parser("serve", help="start the human-labeling HTTP service")
    _add_run_flags(p_srv)
    p_srv.add_argument("--bind", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.add_argument("--capacity", type=int, default=16, help="max concurrent sessions")
    p_srv.add_argument("--snapshot-dir", default=None,
                       help="write per-round JSON snapshots for crash recovery")
    p_srv.add_argument("--ui-dir", default=None, help="serve this directory at / (the web UI)")
    p_srv.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "preset"):
        _apply_preset(argv, args)
    try:
        if args.command in ("run", "compare"):
            # validate metric flags before touching data
            if args.command == "run":
                Metric.from_string(args.metric)
            elif args.metrics.strip().lower() != "all":
                for m in args.metrics.split(","):
                    Metric.from_string(m)
        return args.func(args)
    except ValueError as exc:
        parser.error(str(exc))  # exits 2
    except (DataError, IdxError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteLoss as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point for reproducible experiments.

Subcommands: train, select-m, baseline, bench, predict.  Every run writes
a JSON manifest next to its outputs with the resolved configuration, the
wall-clock time and the similarity-evaluation count.  Exit codes: 0 on
success, 2 on usage errors, 1 on runtime errors.
"""

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import baselines, dataio, metrics, selection, similarity, training
from .datatypes import Dataset, TrainConfig, predict_batch
from .errors import SparsimError


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonneg_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {value}")
    return value


def _parse_box(text, dim):
    if text is None:
        return None
    if text == "data":
        return "data"
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"box must be 'data' or 'lo,hi', got {text!r}")
    return np.tile([lo, hi], (dim, 1))


def _stem(path):
    return os.path.splitext(path)[0]


def _load(args):
    data = dataio.load_csv(args.data, args.target, getattr(args, "group_column", None))
    return data


def _similarity_spec(args, dim):
    if getattr(args, "blackbox", None):
        bridge = dataio.blackbox_bridge(args.blackbox)
        return bridge.spec, bridge
    gamma = args.gamma if args.gamma is not None else 1.0 / dim
    return similarity.SimilaritySpec(kind="rbf", gamma=gamma), None


def _train_config(args, dim):
    return TrainConfig(
        lam=args.lam,
        eta=args.eta,
        epsilon=args.epsilon,
        max_sweeps=args.max_sweeps,
        penalty_enabled=args.penalty,
        box=_parse_box(args.box, dim),
        seed=args.seed,
        grad_mode=args.grad_mode,
    )


def _write_manifest(out, subcommand, config, seed, inputs, outputs, started, evals_before):
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "wall_clock_seconds": time.perf_counter() - started,
        "similarity_evaluations": similarity.EVAL_COUNTER.read() - evals_before,
    }
    path = _stem(out) + ".manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=dataio._jsonable)
        fh.write("\n")


def _config_dict(config: TrainConfig, spec, extra=None):
    out = {
        "lam": config.lam,
        "eta": config.eta,
        "epsilon": config.epsilon,
        "max_sweeps": config.max_sweeps,
        "penalty_enabled": config.penalty_enabled,
        "penalty_decay_power": config.penalty_decay_power,
        "box": None if config.box is None else (config.box if isinstance(config.box, str) else config.box.tolist()),
        "seed": config.seed,
        "grad_mode": config.grad_mode,
        "similarity": {"kind": spec.kind, "gamma": spec.gamma, "blackbox_id": spec.blackbox_id},
    }
    if extra:
        out.update(extra)
    return out


def cmd_train(args):
    started = time.perf_counter()
    evals = similarity.EVAL_COUNTER.read()
    data = _load(args)
    spec, bridge = _similarity_spec(args, data.dim)
    try:
        config = _train_config(args, data.dim)
        model, trace = training.fit(data, args.m, config=config, similarity=spec)
        dataio.save_model(model, args.out)
        trace_path = _stem(args.out) + ".trace.csv"
        trace.write_csv(trace_path)
    finally:
        if bridge is not None:
            bridge.close()
    print(f"trained m={model.m} model, final objective {trace.final_objective:.6g} ({trace.termination})")
    _write_manifest(
        args.out, "train", _config_dict(config, spec, {"m": args.m}), args.seed,
        [args.data], [args.out, trace_path], started, evals,
    )
    return 0


def cmd_select_m(args):
    started = time.perf_counter()
    evals = similarity.EVAL_COUNTER.read()
    data = _load(args)
    spec, bridge = _similarity_spec(args, data.dim)
    try:
        config = _train_config(args, data.dim)
        grid = tuple(int(v) for v in args.grid.split(",")) if args.grid else selection.default_grid(data.n)
        grid_config = selection.GridConfig(grid=grid, rho=args.rho, loss_kind=args.loss, folds=args.folds)
        model, trace = selection.select_model_size(data, grid_config, config, spec)
        dataio.save_model(model, args.out)
        trace_path = _stem(args.out) + ".selection.csv"
        trace.write_csv(trace_path)
    finally:
        if bridge is not None:
            bridge.close()
    print(f"chose m={trace.chosen_m} over grid {grid}")
    _write_manifest(
        args.out, "select-m",
        _config_dict(config, spec, {"grid": list(grid), "rho": grid_config.resolved_rho,
                                    "loss": args.loss, "folds": args.folds, "chosen_m": trace.chosen_m}),
        args.seed, [args.data], [args.out, trace_path], started, evals,
    )
    return 0


def _fit_baseline(data, method, args, spec):
    if method == "ridge":
        return baselines.kernel_ridge_full(data, args.lam, spec)
    if method == "lasso":
        return baselines.lasso_similarity(data, args.lam1, spec)
    kind = {"ps-r": "random", "ps-b": "border", "ps-s": "spanning", "ps-km": "kmedians"}[method]
    return baselines.baseline_pipeline(
        data, baselines.SelectionMethod(kind=kind, m=args.m, seed=args.seed), args.lam, spec
    )


def _metric_rows(model, data):
    pred = predict_batch(model, data.features)
    rows = [("mae", metrics.mae(pred, data.targets)), ("mse", metrics.mse(pred, data.targets))]
    if set(np.unique(data.targets)) <= {-1.0, 1.0}:
        rows.append(("error_rate", metrics.error_rate(pred, data.targets)))
    rows.append(("m", model.m))
    rows.append(("evals_per_prediction", metrics.eval_cost(model)))
    return rows


def cmd_baseline(args):
    started = time.perf_counter()
    evals = similarity.EVAL_COUNTER.read()
    data = _load(args)
    spec, _ = _similarity_spec(args, data.dim)
    model = _fit_baseline(data, args.method, args, spec)
    dataio.save_model(model, args.out)
    eval_data = dataio.load_csv(args.test, args.target) if args.test else data
    metrics_path = _stem(args.out) + ".metrics.csv"
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name, value in _metric_rows(model, eval_data):
            writer.writerow([name, value if isinstance(value, int) else repr(float(value))])
    print(f"{args.method}: m={model.m}")
    _write_manifest(
        args.out, "baseline",
        {"method": args.method, "m": args.m, "lam": args.lam, "lam1": args.lam1,
         "seed": args.seed, "similarity": {"kind": spec.kind, "gamma": spec.gamma}},
        args.seed, [p for p in [args.data, args.test] if p], [args.out, metrics_path], started, evals,
    )
    return 0


BENCH_METHODS = ("sparse", "ps-r", "ps-b", "ps-s", "ps-km", "ridge", "lasso")


def cmd_bench(args):
    started = time.perf_counter()
    evals = similarity.EVAL_COUNTER.read()
    data = _load(args)
    test = dataio.load_csv(args.test, args.target) if args.test else data
    spec, bridge = _similarity_spec(args, data.dim)
    try:
        config = _train_config(args, data.dim)
        methods = args.methods.split(",") if args.methods else list(BENCH_METHODS)
        classification = set(np.unique(test.targets)) <= {-1.0, 1.0}
        rows = []
        for method in methods:
            t0 = time.perf_counter()
            if method == "sparse":
                model, _ = training.fit(data, args.m, config=config, similarity=spec)
            else:
                model = _fit_baseline(data, method, args, spec)
            train_seconds = time.perf_counter() - t0
            pred = predict_batch(model, test.features)
            if classification and args.metric == "error":
                value = metrics.error_rate(pred, test.targets)
            else:
                value = metrics.mae(pred, test.targets)
            rows.append((method, value, model.m, metrics.eval_cost(model), train_seconds))
    finally:
        if bridge is not None:
            bridge.close()
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        metric_name = "error" if (classification and args.metric == "error") else "mae"
        writer.writerow(["method", metric_name, "m", "evals_per_prediction", "train_seconds"])
        for method, value, m, cost, secs in rows:
            writer.writerow([method, repr(float(value)), m, cost, f"{secs:.6f}"])
    print(f"benchmarked {len(rows)} methods -> {args.out}")
    _write_manifest(
        args.out, "bench",
        _config_dict(config, spec, {"m": args.m, "methods": methods, "metric": args.metric,
                                    "lam1": args.lam1}),
        args.seed, [p for p in [args.data, args.test] if p], [args.out], started, evals,
    )
    return 0


def cmd_predict(args):
    started = time.perf_counter()
    evals = similarity.EVAL_COUNTER.read()
    model = dataio.load_model(args.model)
    bridge = None
    if args.blackbox:
        bridge = dataio.blackbox_bridge(args.blackbox)
        from dataclasses import replace

        model = replace(model, similarity=bridge.spec)
    try:
        rows = _read_feature_rows(args.data, args.target)
        predictions = predict_batch(model, rows) if rows.shape[0] else np.empty(0)
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["prediction"])
            for value in predictions:
                writer.writerow([repr(float(value))])
    finally:
        if bridge is not None:
            bridge.close()
    print(f"wrote {predictions.shape[0]} predictions")
    _write_manifest(
        args.out, "predict", {"model": args.model, "target": args.target}, None,
        [args.model, args.data], [args.out], started, evals,
    )
    return 0


def _read_feature_rows(path, target_column=None):
    """Feature matrix from a CSV, tolerating zero data rows."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise dataio.DataFormatError(f"{path}: empty file, expected a header row") from None
        skip = {header.index(target_column)} if target_column in header else set()
        rows = []
        for row_num, row in enumerate(reader, start=2):
            try:
                rows.append([float(cell) for i, cell in enumerate(row) if i not in skip])
            except ValueError:
                raise dataio.DataFormatError(f"{path}: row {row_num}: non-numeric cell") from None
    width = len(header) - len(skip)
    return np.array(rows, dtype=float).reshape(len(rows), width)


def _add_common(parser, out_help="output model path (JSON)"):
    parser.add_argument("--data", required=True, help="training CSV with a header row")
    parser.add_argument("--target", required=True, help="name of the target column")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--lambda", dest="lam", type=_nonneg_float, default=1e-6,
                        help="ridge regularization (default 1e-6)")
    parser.add_argument("--gamma", type=float, default=None,
                        help="RBF bandwidth (default 1/d)")
    parser.add_argument("--out", required=True, help=out_help)


def _add_train_knobs(parser):
    parser.add_argument("--eta", type=float, default=0.5, help="gradient step size")
    parser.add_argument("--epsilon", type=float, default=1e-6, help="convergence tolerance")
    parser.add_argument("--max-sweeps", type=_positive_int, default=50)
    parser.add_argument("--grad-mode", choices=similarity.GRAD_MODES, default="analytic")
    penalty = parser.add_mutually_exclusive_group()
    penalty.add_argument("--penalty", dest="penalty", action="store_true", default=True,
                         help="repel nearby prototypes (default)")
    penalty.add_argument("--no-penalty", dest="penalty", action="store_false")
    parser.add_argument("--box", nargs="?", const="data", default=None,
                        help="projection bounds: 'data' for the feature hull or 'lo,hi'")
    parser.add_argument("--blackbox", default=None,
                        help="command of a line-protocol similarity scorer")


def build_parser():
    parser = argparse.ArgumentParser(prog="sparsim",
                                     description="Super-sparse models in similarity spaces.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("train", help="jointly optimize prototypes and coefficients")
    _add_common(p)
    _add_train_knobs(p)
    p.add_argument("--m", type=_positive_int, required=True, help="number of prototypes")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select-m", help="choose the prototype count by incremental CV")
    _add_common(p)
    _add_train_knobs(p)
    p.add_argument("--grid", default=None, help="descending sizes, e.g. 10,5,4,3,2")
    p.add_argument("--rho", type=_nonneg_float, default=None, help="size penalty weight")
    p.add_argument("--loss", choices=("mse", "mae", "error_rate"), default="mse")
    p.add_argument("--folds", type=_positive_int, default=5)
    p.add_argument("--group-column", default=None, help="subject id column for disjoint folds")
    p.set_defaults(func=cmd_select_m)

    p = sub.add_parser("baseline", help="prototype-selection and linear baselines")
    _add_common(p)
    p.add_argument("--method", required=True, choices=("ps-r", "ps-b", "ps-s", "ps-km", "ridge", "lasso"))
    p.add_argument("--m", type=_positive_int, default=5)
    p.add_argument("--lambda1", dest="lam1", type=_nonneg_float, default=1e-3,
                   help="L1 penalty for the lasso baseline")
    p.add_argument("--test", default=None, help="held-out CSV for the metrics file")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("bench", help="compare methods in one table")
    _add_common(p, out_help="comparison table CSV path")
    _add_train_knobs(p)
    p.add_argument("--m", type=_positive_int, default=5)
    p.add_argument("--methods", default=None, help=f"comma list among {','.join(BENCH_METHODS)}")
    p.add_argument("--metric", choices=("mae", "error"), default="mae")
    p.add_argument("--lambda1", dest="lam1", type=_nonneg_float, default=1e-3)
    p.add_argument("--test", default=None, help="held-out CSV (cross-dataset evaluation)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("predict", help="score a CSV of samples with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", default=None, help="target column to exclude, if present")
    p.add_argument("--blackbox", default=None,
                   help="command of the scorer for black-box models")
    p.add_argument("--out", required=True, help="predictions CSV path")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SparsimError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

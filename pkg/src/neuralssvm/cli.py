"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys

from . import data_io
from .inference import BACKENDS
from .metrics import evaluate_predictions
from .synthetic import SynthConfig, generate_synthetic
from .training import REGIMES, TRACE_COLUMNS, TrainConfig, ablate_predict, predict, train_regime
from .verify import gradient_check, inference_check

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _widths(text: str) -> tuple:
    if text.strip() == "":
        return ()
    try:
        return tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated widths, got {text!r}")


def _grid(text: str) -> tuple:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")
    return w, h


def cmd_synth(args) -> int:
    w, h = args.grid
    try:
        cfg = SynthConfig(width=w, height=h, n_labels=args.labels, sigma_u=args.sigma_u,
                          rho=args.rho, n_samples=args.samples, seed=args.seed,
                          n_regions=args.regions)
    except ValueError as exc:
        raise ConfigError(str(exc))
    ds = generate_synthetic(cfg)
    data_io.write_dataset(ds, args.out)
    print(f"wrote {len(ds)} samples ({w}x{h} grid, {cfg.n_labels} labels) to {args.out}")
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    for w in args.unary_hidden + args.pairwise_hidden:
        if w <= 0:
            raise ConfigError(f"hidden layer widths must be positive, got {w}")
    try:
        return TrainConfig(
            iterations=args.iterations, lam=args.lam, mu=args.mu, t0=args.t0,
            momentum=args.momentum, class_weights=args.class_weights,
            unary_hidden=args.unary_hidden, pairwise_hidden=args.pairwise_hidden,
            activation=args.activation, edge_mode=args.edge_mode, backend=args.backend,
            max_sweeps=args.max_sweeps, seed=args.seed, batch_mode=args.batch_mode,
            unary_rate_scale=args.unary_rate_scale,
            pairwise_rate_scale=args.pairwise_rate_scale,
            clf_epochs=args.clf_epochs, clf_rate=args.clf_rate)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _trace_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for it, obj, best, hinge, secs in trace:
        w.writerow([it, repr(float(obj)), repr(float(best)), repr(float(hinge)), f"{secs:.6f}"])
    return buf.getvalue()


def cmd_train(args) -> int:
    cfg = _train_config(args)
    ds = data_io.read_dataset(args.dataset)
    if any(s.ground_truth is None for s in ds.samples):
        raise data_io.DatasetFormatError("training needs ground truth for every record")
    model, state = train_regime(ds, args.regime, cfg)
    data_io.save_model(model, args.out)
    trace_path = args.trace or f"{args.out}.trace.csv"
    data_io.atomic_write_text(trace_path, _trace_csv(state.trace if state else []))
    report = evaluate_predictions(ds.ground_truths,
                                  predict(ds, model, cfg.backend, cfg.max_sweeps), ds.n_labels)
    if state is not None:
        print(f"final objective {state.trace[-1][1]:.6g}  best objective {state.best_objective:.6g}")
    print(f"training accuracy: pixel-wise {100 * report.pixel_accuracy:.2f}%  "
          f"class-mean {100 * report.class_mean_accuracy:.2f}%")
    print(f"model written to {args.out}; trace to {trace_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = data_io.read_dataset(args.dataset)
    model = data_io.load_model(args.model)
    data_io.check_compatible(model, ds)
    if any(s.ground_truth is None for s in ds.samples):
        raise data_io.DatasetFormatError("evaluation needs ground truth for every record")
    preds = ablate_predict(ds, model, args.ablate, args.backend, args.max_sweeps)
    report = evaluate_predictions(ds.ground_truths, preds, ds.n_labels)
    print(f"model {args.model} ({model.regime or 'unnamed'}), factors: {args.ablate}")
    print(report.table(ds.class_names))
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["pixel_accuracy", repr(report.pixel_accuracy)])
        w.writerow(["class_mean_accuracy", repr(report.class_mean_accuracy)])
        names = ds.class_names or [f"class{c}" for c in range(ds.n_labels)]
        for name, acc in zip(names, report.per_class):
            w.writerow([f"accuracy_{name}", repr(float(acc))])
        data_io.atomic_write_text(args.csv, buf.getvalue())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.trials < 0:
        raise ConfigError("trials must be nonnegative")
    if args.hidden is not None and (len(args.hidden) == 0 or any(w <= 0 for w in args.hidden)):
        raise ConfigError(f"hidden layer widths must be positive, got {list(args.hidden)}")
    if args.trials == 0:
        print("warning: 0 trials, nothing checked (vacuous pass)", file=sys.stderr)
        return EXIT_OK
    activation = None if args.activation == "random" else args.activation
    rep = gradient_check(args.trials, args.seed, args.hidden, activation,
                         args.max_layers, args.max_width)
    status = "PASS" if rep.passed else "FAIL"
    print(f"{status}: {rep.trials} trials, max relative error {rep.max_rel_error:.3e} "
          f"(tolerance {rep.tolerance:g}, {rep.resampled} near-kink samples redrawn)")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_infercheck(args) -> int:
    if args.trials < 0:
        raise ConfigError("trials must be nonnegative")
    rep = inference_check(args.trials, args.seed, args.max_nodes)
    n = rep.trials
    print(f"binary submodular: {rep.binary_exact}/{n} exact")
    print(f"separable:         {rep.separable_exact}/{n} exact")
    print(f"3-label Potts:     {rep.multilabel_local_optimal}/{n} expansion-local optima, "
          f"{rep.monotone}/{n} monotone traces")
    if rep.gaps:
        print(f"                   relative gap to optimum: mean {100 * rep.mean_gap:.3f}%  "
              f"max {100 * max(rep.gaps):.3f}%  exact {sum(g == 0 for g in rep.gaps)}/{n}")
    for f in rep.failures[:20]:
        print(f"  failure: {f}")
    print("PASS" if rep.passed else "FAIL")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="neuralssvm",
                description="Structural SVMs with linear and neural factors.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic grid segmentation dataset")
    s.add_argument("--grid", type=_grid, default=(8, 8), help="WIDTHxHEIGHT (default 8x8)")
    s.add_argument("--labels", type=int, default=3)
    s.add_argument("--sigma-u", type=float, default=1.0, help="unary feature noise")
    s.add_argument("--rho", type=float, default=0.8, help="share of edge signal in the XOR channel")
    s.add_argument("--samples", type=int, default=60)
    s.add_argument("--regions", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    d = TrainConfig()
    t = sub.add_parser("train", help="train a model")
    t.add_argument("dataset")
    t.add_argument("--regime", choices=REGIMES, required=True)
    t.add_argument("--out", required=True, help="model file")
    t.add_argument("--trace", help="trace CSV (default: <out>.trace.csv)")
    t.add_argument("--iterations", "-T", type=int, default=d.iterations)
    t.add_argument("--lam", type=float, default=d.lam)
    t.add_argument("--mu", type=float, default=d.mu)
    t.add_argument("--t0", type=float, default=d.t0)
    t.add_argument("--momentum", type=float, default=d.momentum)
    t.add_argument("--class-weights", choices=("uniform", "class_balanced"),
                   default=d.class_weights)
    t.add_argument("--unary-hidden", type=_widths, default=d.unary_hidden)
    t.add_argument("--pairwise-hidden", type=_widths, default=d.pairwise_hidden)
    t.add_argument("--activation", choices=("tanh", "relu"), default=d.activation)
    t.add_argument("--edge-mode", choices=("symmetric", "full"), default=d.edge_mode)
    t.add_argument("--backend", choices=BACKENDS, default=d.backend)
    t.add_argument("--max-sweeps", type=int, default=d.max_sweeps)
    t.add_argument("--batch-mode", choices=("full", "per_sample"), default=d.batch_mode)
    t.add_argument("--unary-rate-scale", type=float, default=d.unary_rate_scale)
    t.add_argument("--pairwise-rate-scale", type=float, default=d.pairwise_rate_scale)
    t.add_argument("--clf-epochs", type=int, default=d.clf_epochs)
    t.add_argument("--clf-rate", type=float, default=d.clf_rate)
    t.add_argument("--seed", type=int, default=d.seed)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a model on a dataset")
    e.add_argument("dataset")
    e.add_argument("model")
    e.add_argument("--backend", choices=BACKENDS, default="auto")
    e.add_argument("--max-sweeps", type=int, default=d.max_sweeps)
    e.add_argument("--ablate", choices=("both", "unary_only", "interaction_only"),
                   default="both")
    e.add_argument("--csv", help="also write metrics to this CSV file")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="back-propagation vs finite differences")
    g.add_argument("--trials", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--hidden", type=_widths, default=None,
                   help="fixed hidden widths (default: random 1-3 layers)")
    g.add_argument("--activation", choices=("tanh", "relu", "random"), default="random")
    g.add_argument("--max-layers", type=int, default=3)
    g.add_argument("--max-width", type=int, default=64)
    g.set_defaults(func=cmd_gradcheck)

    i = sub.add_parser("infercheck", help="alpha-expansion vs exhaustive enumeration")
    i.add_argument("--trials", type=int, default=200)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--max-nodes", type=int, default=10)
    i.set_defaults(func=cmd_infercheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (data_io.DatasetFormatError, data_io.ModelFormatError,
            data_io.IncompatibleModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands write CSV (to ``--out`` or stdout) preceded by ``# key=value``
lines echoing the resolved configuration. Exit codes: 0 success, 1 usage,
2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import (
    ExperimentConfig,
    LinearSVM,
    RidgeRegression,
    UnitBoxScaler,
    accuracy,
    project_sphere,
    rmse,
    run_approx_experiment,
    run_task_experiment,
)
from .bench.experiments import resolve_dataset
from .exceptions import DataError, GorfError, NumericalError
from .features import build_features, lift, model_bytes
from .kernels import PolynomialSphere, kernel_to_dict, parse_kernel
from .spectrum import spectrum_for, write_spectrum_csv
from .variance import variance_report

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _methods(text):
    return tuple(m.strip().lower() for m in text.split(",") if m.strip())


def _kernel(text):
    try:
        return parse_kernel(text)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise argparse.ArgumentTypeError(f"invalid kernel {text!r}: {exc}") from None


def _common(p, dataset=True):
    p.add_argument("--config", help="JSON file of defaults; explicit flags override it")
    p.add_argument("--kernel", type=_kernel, default=None,
                   help="kernel JSON file or inline spec, e.g. 'delta-gaussian:coefs=1,-1;sigmas=1,10'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    p.add_argument("--convention", choices=("jacobian", "radial"), default="jacobian",
                   help="spectral mass convention")
    if dataset:
        p.add_argument("--dataset", default="digits16",
                       help="libsvm file or bundled fixture name (digits16, housing)")
        p.add_argument("--subsample", type=int, default=1000)
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def build_parser():
    parser = _Parser(prog="gorf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("spectrum", help="tabulate the radial spectral density and norm CDFs")
    _common(p, dataset=False)
    p.add_argument("--dim", type=int, required=False)
    p.add_argument("--points", type=int, default=512)

    p = sub.add_parser("variance", help="variance of i.i.d. and coupled estimators on a lag grid")
    _common(p, dataset=False)
    p.add_argument("--dim", type=int)
    p.add_argument("--s", type=int, help="feature count (default: dim)")
    p.add_argument("--z-grid", type=_floats, default=(0, 0.2, 0.5, 1, 1.5, 2))
    p.add_argument("--reps", type=int, default=10_000, help="Monte Carlo models per grid point")
    p.add_argument("--coupling", choices=("paper", "block"), default="paper")

    p = sub.add_parser("approx", help="relative Gram error on dataset subsamples")
    _common(p)
    p.add_argument("--method", type=_methods, default=("grff", "gorf"),
                   help="comma list from grff,gorf,rff,orf,rm,ts")
    p.add_argument("--s-multiples", type=_floats, default=(0.5, 1, 2, 8))
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--coupling", choices=("paper", "block"), default="paper")

    p = sub.add_parser("train", help="fit features and a linear learner; save the model")
    _common(p)
    p.add_argument("--test-dataset", help="held-out libsvm file (default: random split)")
    p.add_argument("--task", choices=("classify", "regress"), default=None)
    p.add_argument("--method", default="gorf", choices=("grff", "gorf", "rff", "orf"))
    p.add_argument("--s-multiples", type=_floats, default=(8,), help="one multiple of d")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--coupling", choices=("paper", "block"), default="paper")
    p.add_argument("--test-fraction", type=float, default=0.25)
    p.add_argument("--model", required=False, help="where to write the trained model (.npz)")

    p = sub.add_parser("predict", help="apply a trained model to a dataset")
    p.add_argument("--config", help="JSON file of defaults")
    p.add_argument("--model", required=False)
    p.add_argument("--dataset", required=False)
    p.add_argument("--out", default="-")
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; unused")
    return parser


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            defaults = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(defaults) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for key, value in defaults.items():
            action = next(a for a in sub._actions if a.dest == key)
            if action.type is not None and isinstance(value, str):
                value = action.type(value)
            elif isinstance(value, list):
                value = tuple(value)
            defaults[key] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _open_out(path):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _echo(fh, config):
    for key, value in config.items():
        fh.write(f"# {key}={value}\n")


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")


def cmd_spectrum(args):
    _require(args, "kernel")
    dim = args.dim if args.dim is not None else args.kernel.dim
    if dim is None:
        raise UsageError("--dim is required when the kernel has no dimension")
    spectrum = spectrum_for(args.kernel, dim, args.convention)
    fh, own = _open_out(args.out)
    try:
        _echo(fh, {"command": "spectrum", "kernel": kernel_to_dict(args.kernel), "dim": dim,
                   "convention": args.convention, "mass_pos": spectrum.mass_pos,
                   "mass_neg": spectrum.mass_neg, "roots": list(spectrum.roots)})
        write_spectrum_csv(spectrum, fh, args.points)
    finally:
        if own:
            fh.close()
    return EXIT_OK


def cmd_variance(args):
    _require(args, "kernel")
    dim = args.dim if args.dim is not None else args.kernel.dim
    if dim is None:
        raise UsageError("--dim is required when the kernel has no dimension")
    s = args.s or dim
    grid = np.array(sorted(set(args.z_grid)))
    if isinstance(args.kernel, PolynomialSphere) and grid.max() > 2:
        raise UsageError("the polynomial kernel on the sphere needs lags in [0, 2]")
    report = variance_report(args.kernel, dim, s, grid, args.reps, args.seed, args.coupling,
                             args.convention)
    fh, own = _open_out(args.out)
    try:
        report.to_csv(fh, {"command": "variance", "kernel": kernel_to_dict(args.kernel),
                           "dim": dim, "s": s, "trials": args.reps, "seed": args.seed,
                           "coupling": args.coupling, "convention": args.convention})
    finally:
        if own:
            fh.close()
    return EXIT_OK


def _experiment_exit(report):
    if not report.errors:
        return EXIT_OK
    kinds = {r["error_type"] for r in report.errors}
    if kinds & {"data"}:
        return EXIT_DATA
    if kinds & {"numerical"}:
        return EXIT_NUMERIC
    return EXIT_USAGE


def cmd_approx(args):
    _require(args, "kernel")
    config = ExperimentConfig(kernel=args.kernel, dataset=args.dataset, methods=args.method,
                              s_multiples=args.s_multiples, reps=args.reps,
                              subsample=args.subsample, seed=args.seed, task="approx",
                              coupling=args.coupling, convention=args.convention,
                              threads=args.threads)
    report = run_approx_experiment(config)
    fh, own = _open_out(args.out)
    try:
        report.to_csv(fh)
    finally:
        if own:
            fh.close()
    for r in report.errors:
        print(f"gorf: {r['method']} s={r['s']} rep={r['rep']}: {r['error']}", file=sys.stderr)
    return _experiment_exit(report)


def _task_of(args, data):
    return args.task or ("classify" if data.task == "classify" else "regress")


def cmd_train(args):
    _require(args, "kernel")
    if len(args.s_multiples) != 1:
        raise UsageError("train takes a single --s-multiples value")
    data = resolve_dataset(args.dataset, args.task or "auto")
    task = _task_of(args, data)
    test = resolve_dataset(args.test_dataset, data.task) if args.test_dataset else None
    config = ExperimentConfig(kernel=args.kernel, dataset=data, methods=(args.method,),
                              s_multiples=args.s_multiples, reps=args.reps,
                              subsample=args.subsample, seed=args.seed, task=task,
                              coupling=args.coupling, convention=args.convention,
                              test_fraction=args.test_fraction, threads=args.threads)
    report = run_task_experiment(config, data, test)
    fh, own = _open_out(args.out)
    try:
        report.to_csv(fh)
    finally:
        if own:
            fh.close()
    code = _experiment_exit(report)
    if code != EXIT_OK:
        for r in report.errors:
            print(f"gorf: {r['method']} s={r['s']}: {r['error']}", file=sys.stderr)
        return code
    if args.model:
        if test is None:
            raise UsageError("--model needs --test-dataset so the saved model has a fixed training set")
        _fit_and_save(args, config, data, task)
    return EXIT_OK


def _fit_and_save(args, config, data, task):
    """Refit repetition 0 on the full training data and save everything needed to predict."""
    from .bench.experiments import _stream
    from .bench.data import subsample

    train = subsample(data, config.subsample, _stream(config.seed, 0))
    scaler = UnitBoxScaler().fit(train.X)
    X = scaler.transform(train.X)
    if isinstance(config.kernel, PolynomialSphere):
        X = project_sphere(X)
    d = X.shape[1]
    s = max(1, int(round(config.s_multiples[0] * d)))
    model = build_features(config.kernel, s, _stream(config.seed, 0, 0), args.method, d,
                           coupling=config.coupling, convention=config.convention)
    F = lift(model, X)
    if task == "classify":
        learner = LinearSVM(C=config.svm_C).fit(F, train.y)
        extra = {"coef": learner.coef_, "classes": learner.classes_}
    else:
        learner = RidgeRegression(alpha=config.ridge_lambda).fit(F, train.y)
        extra = {"coef": learner.coef_, "intercept": np.array(learner.intercept_)}
    meta = {"task": task, "sphere": isinstance(config.kernel, PolynomialSphere),
            "config": {k: str(v) for k, v in config.echo().items()}}
    with open(args.model, "wb") as fh:
        np.savez(fh, features=np.frombuffer(model_bytes(model), dtype=np.uint8),
                 scaler_min=scaler.min_, scaler_range=scaler.range_,
                 meta=np.array(json.dumps(meta)), **extra)


def _load_bundle(path):
    import io

    from .features import load_model

    with np.load(path, allow_pickle=False) as z:
        parts = {k: z[k].copy() for k in z.files}
    model = load_model(io.BytesIO(parts.pop("features").tobytes()))
    scaler = UnitBoxScaler()
    scaler.min_, scaler.range_ = parts.pop("scaler_min"), parts.pop("scaler_range")
    scaler.n_features_in_ = scaler.min_.size
    meta = json.loads(str(parts.pop("meta")))
    return model, scaler, meta, parts


def cmd_predict(args):
    _require(args, "model", "dataset")
    try:
        model, scaler, meta, parts = _load_bundle(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read model {args.model}: {exc}") from None
    data = resolve_dataset(args.dataset, meta["task"])
    X = scaler.transform(data.X)
    if meta["sphere"]:
        X = project_sphere(X)
    F = lift(model, X)
    if meta["task"] == "classify":
        clf = LinearSVM()
        clf.coef_, clf.classes_, clf.n_features_in_ = parts["coef"], parts["classes"], F.shape[1]
        pred = clf.predict(F)
        metric, value = "accuracy", accuracy(data.y, pred)
    else:
        reg = RidgeRegression()
        reg.coef_, reg.intercept_, reg.n_features_in_ = parts["coef"], float(parts["intercept"]), F.shape[1]
        pred = reg.predict(F)
        metric, value = "rmse", rmse(pred, data.y)
    fh, own = _open_out(args.out)
    try:
        _echo(fh, {"command": "predict", "model": args.model, "dataset": args.dataset,
                   metric: f"{value:.10g}"})
        fh.write("index,prediction,target\n")
        for i, (p, t) in enumerate(zip(pred, data.y)):
            fh.write(f"{i},{p!r},{t!r}\n" if meta["task"] == "regress" else f"{i},{p},{t}\n")
    finally:
        if own:
            fh.close()
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "variance": cmd_variance,
    "approx": cmd_approx,
    "train": cmd_train,
    "predict": cmd_predict,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"gorf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"gorf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GorfError, ValueError) as exc:
        print(f"gorf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

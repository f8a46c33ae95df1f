"""Experiment protocols: Gram approximation error and downstream learning."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..baselines import build_maclaurin, build_tensor_sketch, maclaurin_features, sketch
from ..exceptions import DataError, NumericalError
from ..features import build_features, lift, signature
from ..kernels import PolynomialSphere, gram_matrix, kernel_to_dict, parse_kernel
from .data import FIXTURES, Dataset, load_fixture, load_libsvm, normalize_unit_box, project_sphere, subsample
from .learners import LinearSVM, RidgeRegression, accuracy, relative_error, rmse

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "FeatureMap",
    "make_feature_map",
    "resolve_dataset",
    "run_approx_experiment",
    "run_task_experiment",
]

ALL_METHODS = ("grff", "gorf", "rff", "orf", "rm", "ts")


@dataclass
class ExperimentConfig:
    kernel: object = "delta-gaussian:coefs=1,-1;sigmas=1,10"
    dataset: object = "digits16"
    methods: tuple = ("grff", "gorf")
    s_multiples: tuple = (0.5, 1, 2, 8)
    reps: int = 10
    subsample: int | None = 1000
    seed: int = 0
    task: str = "approx"
    ridge_lambda: float | None = None
    svm_C: float = 1000.0
    coupling: str = "paper"
    convention: str = "jacobian"
    test_fraction: float = 0.25
    threads: int = 1

    def __post_init__(self):
        if isinstance(self.kernel, str):
            self.kernel = parse_kernel(self.kernel)
        self.methods = tuple(m.lower() for m in self.methods)
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad:
            raise ValueError(f"unknown method(s) {bad}; choose from {ALL_METHODS}")
        self.s_multiples = tuple(float(m) for m in self.s_multiples)
        if any(m <= 0 for m in self.s_multiples):
            raise ValueError("feature-count multiples must be positive")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.task not in ("approx", "classify", "regress"):
            raise ValueError("task must be approx, classify or regress")

    def echo(self):
        out = asdict(self)
        out["kernel"] = kernel_to_dict(self.kernel)
        if isinstance(self.dataset, Dataset):
            out["dataset"] = self.dataset.path or "<in-memory>"
        return out


@dataclass
class ExperimentReport:
    """Per-trial rows plus aggregates keyed by ``(method, s)``."""

    config: dict
    metric: str
    rows: list = field(default_factory=list)

    @property
    def errors(self):
        return [r for r in self.rows if r["error"]]

    def summary(self):
        """``{(method, s): {"mean", "std", "n", "runtime"}}``; std uses ``ddof=0``."""
        groups = {}
        for r in self.rows:
            if not r["error"]:
                groups.setdefault((r["method"], r["s"]), []).append(r)
        out = {}
        for key, rs in groups.items():
            vals = np.array([r["value"] for r in rs])
            out[key] = {
                "mean": float(vals.mean()),
                "std": float(vals.std()),
                "n": len(rs),
                "runtime": float(sum(r["runtime"] for r in rs)),
                "s_multiple": rs[0]["s_multiple"],
            }
        return out

    def values(self, method, s):
        return np.array([r["value"] for r in self.rows
                         if r["method"] == method and r["s"] == s and not r["error"]])

    def to_csv(self, path_or_file):
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            for key, value in self.config.items():
                fh.write(f"# {key}={value}\n")
            w = csv.writer(fh)
            w.writerow(["kind", "method", "s", "s_multiple", "rep", "metric", "value",
                        "std", "n", "runtime_s", "error"])
            for r in self.rows:
                w.writerow(["trial", r["method"], r["s"], r["s_multiple"], r["rep"], self.metric,
                            "" if r["error"] else f"{r['value']:.10g}", "", 1,
                            f"{r['runtime']:.4f}", r["error"]])
            for (method, s), agg in sorted(self.summary().items()):
                w.writerow(["aggregate", method, s, agg["s_multiple"], "", self.metric,
                            f"{agg['mean']:.10g}", f"{agg['std']:.10g}", agg["n"],
                            f"{agg['runtime']:.4f}", ""])
        finally:
            if own:
                fh.close()


class FeatureMap:
    """Uniform wrapper over random-feature models and polynomial baselines."""

    def __init__(self, method, model):
        self.method = method
        self.model = model

    def transform(self, X):
        if self.method == "rm":
            return maclaurin_features(self.model, X)
        if self.method == "ts":
            return sketch(self.model, X)
        return lift(self.model, X)

    @property
    def signature(self):
        if self.method in ("rm", "ts"):
            return None
        return signature(self.model)

    def gram(self, X, Y=None):
        FX = self.transform(X)
        FY = FX if Y is None else self.transform(Y)
        sig = self.signature
        return (FX if sig is None else FX * sig) @ FY.T


def make_feature_map(method, kernel, s, rng, dim, coupling="paper", convention="jacobian"):
    method = method.lower()
    if method == "rm":
        return FeatureMap(method, build_maclaurin(kernel, s, rng, dim))
    if method == "ts":
        return FeatureMap(method, build_tensor_sketch(kernel, s, rng, dim))
    return FeatureMap(method, build_features(kernel, s, rng, method, dim,
                                             coupling=coupling, convention=convention))


def resolve_dataset(dataset, task="auto"):
    if isinstance(dataset, Dataset):
        return dataset
    if dataset in FIXTURES:
        return load_fixture(dataset)
    return load_libsvm(dataset, task=task)


def _feature_counts(config, d):
    return [(m, max(1, int(round(m * d)))) for m in config.s_multiples]


def _stream(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def _prepare(kernel, train, test=None):
    out = normalize_unit_box(train, test)
    if not isinstance(kernel, PolynomialSphere):
        return out
    if test is None:
        return project_sphere(out)
    return project_sphere(out[0]), project_sphere(out[1])


def _trial(config, rep, s_mult, s, method, body):
    t0 = time.perf_counter()
    row = {"method": method, "s": s, "s_multiple": s_mult, "rep": rep, "value": float("nan"),
           "error": "", "error_type": ""}
    try:
        row["value"] = float(body())
    except Exception as exc:  # recorded per method, other methods continue
        row["error"] = f"{type(exc).__name__}: {exc}"
        row["error_type"] = ("numerical" if isinstance(exc, NumericalError)
                             else "data" if isinstance(exc, DataError) else "usage")
    row["runtime"] = time.perf_counter() - t0
    return row


def _run(config, rep_fn):
    if config.threads and config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            chunks = list(pool.map(rep_fn, range(config.reps)))
    else:
        chunks = [rep_fn(r) for r in range(config.reps)]
    return [row for chunk in chunks for row in chunk]


def run_approx_experiment(config, dataset=None):
    """Relative Frobenius error of approximate Gram matrices on row subsamples.

    Repetition ``r`` subsamples with stream ``(seed, r)``. Every method at a
    given feature count uses stream ``(seed, r, j)``, so methods that draw
    norms first (GRFF and GORF) share their norm draws.
    """
    data = resolve_dataset(dataset if dataset is not None else config.dataset)
    data = _prepare(config.kernel, data)
    d = data.dim

    def rep_fn(rep):
        sub = subsample(data, config.subsample, _stream(config.seed, rep))
        K = gram_matrix(config.kernel, sub.X)
        rows = []
        for j, (mult, s) in enumerate(_feature_counts(config, d)):
            for method in config.methods:
                def body():
                    fmap = make_feature_map(method, config.kernel, s, _stream(config.seed, rep, j),
                                            d, config.coupling, config.convention)
                    return relative_error(K, fmap.gram(sub.X))
                rows.append(_trial(config, rep, mult, s, method, body))
        return rows

    return ExperimentReport(config.echo(), "relative_error", _run(config, rep_fn))


def run_task_experiment(config, train=None, test=None):
    """Train a linear learner on lifted features and score it on held-out data.

    Without an explicit test split, each repetition draws a random split
    with ``config.test_fraction`` of the rows held out.
    """
    train = resolve_dataset(train if train is not None else config.dataset,
                            "classify" if config.task == "classify" else "regress")
    if test is not None:
        test = resolve_dataset(test, train.task)
    if config.task == "classify" and np.unique(train.y).size < 2:
        raise DataError("classification training data needs at least two classes")
    metric = "accuracy" if config.task == "classify" else "rmse"

    def rep_fn(rep):
        rng = _stream(config.seed, rep)
        if test is None:
            perm = rng.permutation(train.n)
            n_test = max(1, int(round(config.test_fraction * train.n)))
            tr, te = train.take(np.sort(perm[n_test:])), train.take(np.sort(perm[:n_test]), "test")
        else:
            tr, te = train, test
        tr = subsample(tr, config.subsample, rng)
        tr, te = _prepare(config.kernel, tr, te)
        d = tr.dim
        rows = []
        for j, (mult, s) in enumerate(_feature_counts(config, d)):
            for method in config.methods:
                def body():
                    fmap = make_feature_map(method, config.kernel, s, _stream(config.seed, rep, j),
                                            d, config.coupling, config.convention)
                    Ftr, Fte = fmap.transform(tr.X), fmap.transform(te.X)
                    if config.task == "classify":
                        clf = LinearSVM(C=config.svm_C).fit(Ftr, tr.y)
                        return accuracy(te.y, clf.predict(Fte))
                    reg = RidgeRegression(alpha=config.ridge_lambda).fit(Ftr, tr.y)
                    return rmse(reg.predict(Fte), te.y)
                rows.append(_trial(config, rep, mult, s, method, body))
        return rows

    return ExperimentReport(config.echo(), metric, _run(config, rep_fn))

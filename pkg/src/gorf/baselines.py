"""Unbiased feature maps for the polynomial kernel on the sphere.

Both baselines approximate ``alpha (q + <x, y>)^m`` directly through its dot
product form, so they only apply to :class:`~gorf.kernels.PolynomialSphere`.

Random Maclaurin draws a degree ``N`` per feature with probability
``2^-(N+1)`` and multiplies ``N`` Rademacher projections. Tensor Sketch
count-sketches the input (augmented with ``sqrt(q)``) once per degree and
multiplies the sketches in the Fourier domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DimensionMismatchError, IncompatibleKernelError
from .kernels import PolynomialSphere, parse_kernel
from .numerics import make_rng

__all__ = [
    "MaclaurinModel",
    "SketchModel",
    "build_maclaurin",
    "maclaurin_features",
    "build_tensor_sketch",
    "sketch",
    "RandomMaclaurin",
    "TensorSketch",
]

MAX_DEGREE = 30
BASE = 2.0


def _require_polynomial(spec):
    if isinstance(spec, str):
        spec = parse_kernel(spec)
    if not isinstance(spec, PolynomialSphere):
        raise IncompatibleKernelError(
            f"this baseline needs a polynomial kernel on the sphere, got {spec.variant!r}"
        )
    return spec


def _check_dim(X, d):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != d:
        raise DimensionMismatchError(f"model expects dimension {d}, got {X.shape[1]}")
    return X


def degree_probabilities(max_degree=MAX_DEGREE, base=BASE):
    """``P(N = n)`` proportional to ``base^-(n+1)`` on ``0..max_degree``."""
    p = base ** -(np.arange(max_degree + 1) + 1.0)
    return p / p.sum()


@dataclass(frozen=True, eq=False)
class MaclaurinModel:
    degrees: np.ndarray        # (s,)
    omegas: np.ndarray         # (s, max_used_degree, d), Rademacher
    scales: np.ndarray         # (s,) sqrt(a_N / P(N) / s)
    coefs: np.ndarray
    kernel: object = None

    @property
    def s(self):
        return self.degrees.size

    @property
    def dim(self):
        return self.omegas.shape[2]


def build_maclaurin(spec, s, rng=None, dim=None):
    spec = _require_polynomial(spec)
    d = dim if dim is not None else spec.dim
    if d is None:
        raise ValueError("input dimension is unknown")
    if s < 1:
        raise ValueError("s must be >= 1")
    coefs = spec.maclaurin_coefs()
    if np.any(coefs < 0):
        raise ValueError("Maclaurin expansion has a negative coefficient")
    rng = make_rng(rng)
    probs = degree_probabilities()
    degrees = rng.choice(probs.size, size=s, p=probs)
    a = np.zeros(probs.size)
    a[:coefs.size] = coefs
    depth = max(1, int(min(degrees.max(), coefs.size - 1)))
    omegas = rng.choice([-1.0, 1.0], size=(s, depth, int(d)))
    scales = np.sqrt(a[degrees] / probs[degrees] / s)
    return MaclaurinModel(degrees=degrees, omegas=omegas, scales=scales, coefs=coefs, kernel=spec)


def maclaurin_features(model, X):
    X = _check_dim(X, model.dim)
    proj = np.einsum("nd,std->nst", X, model.omegas)          # (n, s, depth)
    depth = model.omegas.shape[1]
    mask = np.arange(depth)[None, :] < model.degrees[:, None]  # (s, depth)
    prod = np.prod(np.where(mask[None], proj, 1.0), axis=2)
    # Degrees beyond the kernel's order carry a zero coefficient.
    return prod * model.scales[None, :]


@dataclass(frozen=True, eq=False)
class SketchModel:
    hashes: np.ndarray   # (m, d + 1) bucket indices
    signs: np.ndarray    # (m, d + 1) +-1
    s: int
    q: float
    alpha: float
    kernel: object = None

    @property
    def dim(self):
        return self.hashes.shape[1] - 1


def build_tensor_sketch(spec, s, rng=None, dim=None):
    spec = _require_polynomial(spec)
    d = dim if dim is not None else spec.dim
    if d is None:
        raise ValueError("input dimension is unknown")
    if s < 1:
        raise ValueError("s must be >= 1")
    rng = make_rng(rng)
    hashes = rng.integers(0, s, size=(spec.m, int(d) + 1))
    signs = rng.choice([-1.0, 1.0], size=(spec.m, int(d) + 1))
    return SketchModel(hashes=hashes, signs=signs, s=int(s), q=spec.q, alpha=spec.alpha, kernel=spec)


def _count_sketch(Xa, h, g, s):
    out = np.zeros((Xa.shape[0], s))
    np.add.at(out.T, h, (Xa * g).T)
    return out


def sketch(model, X):
    """Tensor sketch of each row, length ``s``."""
    X = _check_dim(X, model.dim)
    Xa = np.hstack([X, np.full((X.shape[0], 1), math.sqrt(model.q))])
    spectrum = None
    for h, g in zip(model.hashes, model.signs):
        f = np.fft.fft(_count_sketch(Xa, h, g, model.s), axis=1)
        spectrum = f if spectrum is None else spectrum * f
    out = np.real(np.fft.ifft(spectrum, axis=1))
    return math.sqrt(model.alpha) * out


class _PolynomialBaseline(TransformerMixin, BaseEstimator):
    def __init__(self, kernel="polynomial:a=3;m=1", n_components=None, random_state=None):
        self.kernel = kernel
        self.n_components = n_components
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        d = X.shape[1]
        s = d if self.n_components is None else int(self.n_components)
        self.model_ = self._build(self.kernel, s, self.random_state, d)
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return self._map(self.model_, check_array(X, dtype=float))

    def approx_gram(self, X, Y=None):
        FX = self.transform(X)
        FY = FX if Y is None else self.transform(Y)
        return FX @ FY.T


class RandomMaclaurin(_PolynomialBaseline):
    """Random Maclaurin features; output has ``n_components`` columns."""

    _build = staticmethod(build_maclaurin)
    _map = staticmethod(maclaurin_features)


class TensorSketch(_PolynomialBaseline):
    """Tensor Sketch features; output has ``n_components`` columns."""

    _build = staticmethod(build_tensor_sketch)
    _map = staticmethod(sketch)

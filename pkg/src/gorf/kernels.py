"""Closed-form stationary kernels and their radial spectral densities.

Each kernel is an immutable value object. ``spectral_density(r, d)`` is the
Fourier density on R^d evaluated at ``|w| = r`` under the convention
``k(z) = int exp(i w.z) p(w) dw``, so it integrates to ``k(0)`` over R^d.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DimensionMismatchError, DomainError, SphereViolationError
from .numerics import radial_char_fn

__all__ = [
    "Gaussian",
    "PolynomialSphere",
    "DeltaGaussian",
    "kernel_eval",
    "kernel_profile_eval",
    "gram_matrix",
    "kernel_from_dict",
    "kernel_to_dict",
    "load_kernel",
    "save_kernel",
    "parse_kernel",
]

SPHERE_TOL = 1e-8


@dataclass(frozen=True)
class Gaussian:
    """``k(z) = exp(-|z|^2 / (2 sigma^2))``. Positive definite."""

    sigma: float = 1.0
    dim: int | None = None

    variant = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def k0(self):
        return 1.0

    @property
    def is_positive_definite(self):
        return True

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-0.5 * (t / self.sigma) ** 2)

    def spectral_density(self, r, d):
        r = np.asarray(r, dtype=float)
        s2 = self.sigma**2
        return np.exp(0.5 * d * math.log(s2 / (2 * math.pi)) - 0.5 * s2 * r * r)


@dataclass(frozen=True)
class DeltaGaussian:
    """Signed combination ``sum_i a_i exp(-|z|^2 / (2 sigma_i^2))``."""

    coefs: tuple = (1.0, -1.0)
    sigmas: tuple = (1.0, 10.0)
    dim: int | None = None

    variant = "delta-gaussian"

    def __post_init__(self):
        coefs = tuple(float(c) for c in self.coefs)
        sigmas = tuple(float(s) for s in self.sigmas)
        object.__setattr__(self, "coefs", coefs)
        object.__setattr__(self, "sigmas", sigmas)
        if len(coefs) != len(sigmas) or not coefs:
            raise ValueError("coefs and sigmas must be non-empty and the same length")
        if any(c == 0 for c in coefs):
            raise ValueError("coefficients must be nonzero")
        if any(not s > 0 for s in sigmas):
            raise ValueError("bandwidths must be positive")
        if len(set(sigmas)) != len(sigmas):
            raise ValueError("bandwidths must be pairwise distinct")

    @property
    def k0(self):
        return float(sum(self.coefs))

    @property
    def is_positive_definite(self):
        return all(c > 0 for c in self.coefs)

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        return sum(a * np.exp(-0.5 * (t / s) ** 2) for a, s in zip(self.coefs, self.sigmas))

    def component_densities(self, r, d):
        """Per-term spectral densities, shape ``(q,) + r.shape``."""
        r = np.asarray(r, dtype=float)
        return np.stack([
            a * np.exp(0.5 * d * math.log(s * s / (2 * math.pi)) - 0.5 * s * s * r * r)
            for a, s in zip(self.coefs, self.sigmas)
        ])

    def spectral_density(self, r, d):
        return self.component_densities(r, d).sum(axis=0)


@dataclass(frozen=True)
class PolynomialSphere:
    """Polynomial kernel restricted to the unit sphere.

    ``(1 - |x - y|^2 / a^2)^m = alpha (q + <x, y>)^m`` with ``q = a^2/2 - 1``
    and ``alpha = (2 / a^2)^m``. Only defined for ``|z| <= 2``.
    """

    a: float = 3.0
    m: int = 1
    dim: int | None = None

    variant = "polynomial"

    def __post_init__(self):
        if not self.a > 2:
            raise ValueError("a must exceed 2")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "a", float(self.a))

    @property
    def q(self):
        return self.a**2 / 2.0 - 1.0

    @property
    def alpha(self):
        return (2.0 / self.a**2) ** self.m

    @property
    def k0(self):
        return 1.0

    @property
    def is_positive_definite(self):
        return False

    def maclaurin_coefs(self):
        """Coefficients of ``alpha (q + t)^m`` as a power series in ``t``."""
        return np.array([
            self.alpha * math.comb(self.m, n) * self.q ** (self.m - n) for n in range(self.m + 1)
        ])

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > 2.0 + 1e-12) or np.any(t < 0):
            raise DomainError("polynomial kernel on the sphere needs 0 <= |z| <= 2")
        return (1.0 - t * t / self.a**2) ** self.m

    def spectral_density(self, r, d):
        # (2/r)^nu J_nu(2r) = 2^nu Omega_{2nu+2}(2r) / Gamma(nu+1), finite at r = 0.
        r = np.asarray(r, dtype=float)
        m, a = self.m, self.a
        out = np.zeros_like(r)
        for i in range(m + 1):
            nu = d / 2.0 + i
            coef = (math.factorial(m) / math.factorial(m - i)
                    * (1 - 4 / a**2) ** (m - i) * (2 / a**2) ** i)
            scaled = math.exp(nu * math.log(2.0) - math.lgamma(nu + 1.0))
            out = out + coef * scaled * radial_char_fn(d + 2 * i + 2, 2.0 * r)
        return out * (2 * math.pi) ** (-d / 2.0)


_VARIANTS = {cls.variant: cls for cls in (Gaussian, DeltaGaussian, PolynomialSphere)}


def _check_pair(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionMismatchError(f"inputs have dimensions {x.size} and {y.size}")
    return x, y


def _check_sphere(X):
    norms = np.linalg.norm(np.atleast_2d(X), axis=1)
    if np.any(np.abs(norms - 1.0) > SPHERE_TOL):
        raise SphereViolationError("polynomial kernel inputs must lie on the unit sphere")


def kernel_eval(spec, x, y):
    x, y = _check_pair(x, y)
    if spec.dim is not None and x.size != spec.dim:
        raise DimensionMismatchError(f"kernel expects dimension {spec.dim}, got {x.size}")
    if isinstance(spec, PolynomialSphere):
        _check_sphere(np.vstack([x, y]))
        t2 = float(np.sum((x - y) ** 2))
        shift = (1.0 - t2 / spec.a**2) ** spec.m
        dot = spec.alpha * (spec.q + float(x @ y)) ** spec.m
        if abs(shift - dot) > 1e-10:
            raise AssertionError(f"polynomial forms disagree: {shift} vs {dot}")
        return shift
    return float(spec.profile(np.linalg.norm(x - y)))


def kernel_profile_eval(spec, z_norm):
    z = np.asarray(z_norm, dtype=float)
    if np.any(z < 0):
        raise DomainError("z_norm must be nonnegative")
    out = spec.profile(z)
    return float(out) if np.ndim(out) == 0 else out


def gram_matrix(spec, X, Y=None):
    """Exact kernel matrix ``[k(x_i, y_j)]``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatchError("X and Y have different numbers of columns")
    if isinstance(spec, PolynomialSphere):
        _check_sphere(X)
        _check_sphere(Y)
        G = np.clip(X @ Y.T, -1.0, 1.0)
        K = spec.alpha * (spec.q + G) ** spec.m
    else:
        D2 = cdist(X, Y, "sqeuclidean")
        K = spec.profile(np.sqrt(D2))
    if Y is X:
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, spec.k0)
    return K


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def kernel_to_dict(spec):
    params = {k: v for k, v in asdict(spec).items() if k != "dim"}
    for k, v in params.items():
        if isinstance(v, tuple):
            params[k] = list(v)
    return {"variant": spec.variant, "parameters": params, "dim": spec.dim}


def kernel_from_dict(data):
    try:
        cls = _VARIANTS[data["variant"]]
    except KeyError as exc:
        raise ValueError(f"unknown kernel variant {data.get('variant')!r}") from exc
    params = dict(data.get("parameters", {}))
    for k, v in params.items():
        if isinstance(v, list):
            params[k] = tuple(v)
    return cls(**params, dim=data.get("dim"))


def save_kernel(spec, path):
    Path(path).write_text(json.dumps(kernel_to_dict(spec), indent=2) + "\n")


def load_kernel(path):
    return kernel_from_dict(json.loads(Path(path).read_text()))


def parse_kernel(text):
    """Build a kernel from a JSON file path or an inline description.

    Inline form: ``variant:key=v1,v2;key=v`` e.g.
    ``delta-gaussian:coefs=1,-1;sigmas=1,10`` or ``polynomial:a=3;m=1``.
    """
    path = Path(text)
    if path.suffix == ".json" or path.is_file():
        return load_kernel(path)
    variant, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(";")):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"malformed kernel parameter {item!r}")
        values = [float(v) for v in value.split(",")]
        params[key.strip()] = tuple(values) if len(values) > 1 or key in ("coefs", "sigmas") else values[0]
    if "dim" in params:
        params["dim"] = int(params["dim"])
    if "m" in params:
        params["m"] = int(params["m"])
    return kernel_from_dict({"variant": variant.strip(), "parameters": {k: v for k, v in params.items() if k != "dim"},
                             "dim": params.get("dim")})

"""Generalized random features for stationary, possibly indefinite kernels.

A feature model holds two frequency matrices, ``W_pos`` drawn from the
normalized positive spectral part and ``W_neg`` from the negative part. The
lifted vector of ``x`` has ``4s`` real entries::

    [sqrt(m+/s) cos(W_pos^T x), sqrt(m+/s) sin(W_pos^T x),
     sqrt(m-/s) cos(W_neg^T x), sqrt(m-/s) sin(W_neg^T x)]

and the kernel estimate is the inner product under the metric
``diag(+1, +1, -1, -1)`` (blocks of length ``s``).

Four builders are provided. ``grff`` draws every direction independently.
``gorf`` couples all ``2s`` directions through one orthogonal matrix.
``rff`` and ``orf`` are the positive-definite special cases.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DimensionMismatchError, IndefiniteKernelError
from .kernels import kernel_from_dict, kernel_to_dict, parse_kernel
from .numerics import _qr_signed, make_rng
from .spectrum import spectrum_for

__all__ = [
    "FeatureModel",
    "build_grff",
    "build_gorf",
    "build_rff",
    "build_orf",
    "build_features",
    "sample_frequencies",
    "lift",
    "signature",
    "approx_kernel",
    "approx_gram",
    "save_model",
    "load_model",
    "GeneralizedRandomFeatures",
]

METHODS = ("grff", "gorf", "rff", "orf")
COUPLINGS = ("paper", "block")


@dataclass(frozen=True, eq=False)
class FeatureModel:
    """Materialized random frequencies. Columns of ``W_pos``/``W_neg`` are frequencies."""

    method: str
    W_pos: np.ndarray
    W_neg: np.ndarray | None
    mass_pos: float
    mass_neg: float
    kernel: object = None
    seed: object = None
    coupling: str = "paper"
    convention: str = "jacobian"
    extra: dict = field(default_factory=dict)

    @property
    def s(self):
        return self.W_pos.shape[1]

    @property
    def dim(self):
        return self.W_pos.shape[0]

    @property
    def n_features(self):
        return 4 * self.s

    @property
    def k0(self):
        return self.mass_pos - self.mass_neg


# --------------------------------------------------------------------------
# Direction samplers (batched: leading axis indexes independent models)
# --------------------------------------------------------------------------

def _unit_columns(M):
    return M / np.linalg.norm(M, axis=-2, keepdims=True)


def iid_directions(rng, batch, d, n):
    """``(batch, d, n)`` directions, each uniform on the sphere, all independent."""
    return _unit_columns(rng.standard_normal((batch, d, n)))


def orthogonal_directions(rng, batch, d, n):
    """``(batch, d, n)`` orthonormal blocks of ``d`` columns, blocks independent.

    With ``n <= d`` the columns are exactly orthonormal. Larger ``n`` stacks
    ``ceil(n / d)`` independent square orthogonal matrices.
    """
    blocks = math.ceil(n / d)
    G = rng.standard_normal((batch * blocks, d, d))
    Q, _ = _qr_signed(G)
    Q = Q.reshape(batch, blocks, d, d).transpose(0, 2, 1, 3).reshape(batch, d, blocks * d)
    return Q[:, :, :n]


def coupled_directions(rng, batch, d, s):
    """Directions for ``W_pos`` and ``W_neg`` from one orthogonal matrix.

    ``m = max(s, d)``; a ``2m x 2m`` Gaussian matrix is orthogonalized, its
    first ``d`` rows are kept and each column renormalized. Column ``i``
    feeds ``w_i`` and column ``s + i`` feeds ``v_i``.
    """
    m = max(s, d)
    G = rng.standard_normal((batch, 2 * m, 2 * m))
    Q, _ = _qr_signed(G)
    U = _unit_columns(Q[:, :d, :])
    return U[:, :, :s], U[:, :, s:2 * s]


# --------------------------------------------------------------------------
# Model construction
# --------------------------------------------------------------------------

def _resolve(spec, dim, convention):
    if isinstance(spec, str):
        spec = parse_kernel(spec)
    d = dim if dim is not None else spec.dim
    if d is None:
        raise ValueError("input dimension is unknown: pass dim or set it on the kernel")
    if spec.dim is not None and dim is not None and spec.dim != dim:
        raise DimensionMismatchError(f"kernel dimension {spec.dim} differs from data dimension {dim}")
    return spec, int(d), spectrum_for(spec, int(d), convention)


def sample_frequencies(spectrum, s, method, rng, batch=1, coupling="paper"):
    """Draw ``batch`` independent frequency sets.

    Returns ``(W_pos, W_neg)`` with shapes ``(batch, d, s)``; ``W_neg`` is
    ``None`` when the negative part is empty. Norms are drawn first
    (positive, then negative), then directions.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if coupling not in COUPLINGS:
        raise ValueError(f"coupling must be one of {COUPLINGS}")
    rng = make_rng(rng)
    d = spectrum.dim
    signed = spectrum.mass_neg > 0
    if method in ("rff", "orf") and signed:
        raise IndefiniteKernelError(
            f"{method.upper()} needs a positive definite kernel; this one has negative "
            f"spectral mass {spectrum.mass_neg:.6g}"
        )
    r_pos, r_neg = sample_norm_pairs(spectrum, rng, batch, s)
    U, V = draw_directions(method, rng, batch, d, s, signed, coupling)
    W_pos = U * r_pos[:, None, :]
    W_neg = V * r_neg[:, None, :] if signed else None
    return W_pos, W_neg


def sample_norm_pairs(spectrum, rng, batch, s):
    """Norms for both parts, shape ``(batch, s)``; the negative one may be ``None``."""
    r_pos = spectrum.sampler(1).quantile(rng.random((batch, s)))
    r_neg = None
    if spectrum.mass_neg > 0:
        r_neg = spectrum.sampler(-1).quantile(rng.random((batch, s)))
    return r_pos, r_neg


def draw_directions(method, rng, batch, d, s, signed, coupling="paper"):
    """Unit directions ``(U, V)`` for the positive and negative frequencies."""
    if method in ("grff", "rff"):
        U = iid_directions(rng, batch, d, s)
        V = iid_directions(rng, batch, d, s) if signed else None
    elif not signed:
        U, V = orthogonal_directions(rng, batch, d, s), None
    elif coupling == "paper":
        U, V = coupled_directions(rng, batch, d, s)
    else:
        U = orthogonal_directions(rng, batch, d, s)
        V = orthogonal_directions(rng, batch, d, s)
    return U, V


def build_features(spec, s, rng=None, method="gorf", dim=None, coupling="paper",
                   convention="jacobian"):
    """Build one feature model; ``method`` selects the builder."""
    method = method.lower()
    spec, d, spectrum = _resolve(spec, dim, convention)
    seed = rng if isinstance(rng, (int, np.integer)) else None
    W_pos, W_neg = sample_frequencies(spectrum, s, method, rng, batch=1, coupling=coupling)
    return FeatureModel(
        method=method,
        W_pos=W_pos[0],
        W_neg=None if W_neg is None else W_neg[0],
        mass_pos=spectrum.mass_pos,
        mass_neg=spectrum.mass_neg,
        kernel=spec,
        seed=seed,
        coupling=coupling if method == "gorf" else "none",
        convention=convention,
    )


def build_grff(spec, s, rng=None, dim=None, convention="jacobian"):
    return build_features(spec, s, rng, "grff", dim, convention=convention)


def build_gorf(spec, s, rng=None, dim=None, coupling="paper", convention="jacobian"):
    return build_features(spec, s, rng, "gorf", dim, coupling=coupling, convention=convention)


def build_rff(spec, s, rng=None, dim=None):
    return build_features(spec, s, rng, "rff", dim)


def build_orf(spec, s, rng=None, dim=None):
    return build_features(spec, s, rng, "orf", dim)


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

def _as_rows(model, X):
    X = np.asarray(X, dtype=float)
    one = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.dim:
        raise DimensionMismatchError(f"model expects dimension {model.dim}, got {X.shape[1]}")
    return X, one


def signature(model):
    """Metric signs of the lifted coordinates: ``+1`` for 2s, ``-1`` for 2s."""
    s = model.s
    return np.concatenate([np.ones(2 * s), -np.ones(2 * s)])


def lift(model, X):
    """Lifted vectors of length ``4s`` (one row per input row)."""
    X, one = _as_rows(model, X)
    s = model.s
    P = X @ model.W_pos
    out = np.zeros((X.shape[0], 4 * s))
    cp = math.sqrt(model.mass_pos / s)
    out[:, :s] = cp * np.cos(P)
    out[:, s:2 * s] = cp * np.sin(P)
    if model.W_neg is not None and model.mass_neg > 0:
        N = X @ model.W_neg
        cn = math.sqrt(model.mass_neg / s)
        out[:, 2 * s:3 * s] = cn * np.cos(N)
        out[:, 3 * s:] = cn * np.sin(N)
    return out[0] if one else out


def approx_kernel(model, x, y):
    """Kernel estimate at the pair ``(x, y)`` evaluated from ``z = x - y``."""
    x, _ = _as_rows(model, x)
    y, _ = _as_rows(model, y)
    if x.shape[0] != 1 or y.shape[0] != 1:
        raise ValueError("approx_kernel takes single vectors; use approx_gram for batches")
    z = (x - y)[0]
    val = model.mass_pos * np.mean(np.cos(z @ model.W_pos))
    if model.W_neg is not None and model.mass_neg > 0:
        val -= model.mass_neg * np.mean(np.cos(z @ model.W_neg))
    return float(val)


def approx_gram(model, X, Y=None):
    """Signed block product of lifted design matrices."""
    FX = lift(model, np.atleast_2d(X))
    FY = FX if Y is None else lift(model, np.atleast_2d(Y))
    K = (FX * signature(model)) @ FY.T
    if Y is None:
        K = 0.5 * (K + K.T)
    return K


def batch_estimates(W_pos, W_neg, mass_pos, mass_neg, z):
    """Kernel estimates at lag ``z`` for a batch of frequency sets."""
    z = np.asarray(z, dtype=float)
    est = mass_pos * np.cos(np.einsum("d,bds->bs", z, W_pos)).mean(axis=1)
    if W_neg is not None and mass_neg > 0:
        est = est - mass_neg * np.cos(np.einsum("d,bds->bs", z, W_neg)).mean(axis=1)
    return est


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def _meta(model):
    return {
        "method": model.method,
        "mass_pos": model.mass_pos,
        "mass_neg": model.mass_neg,
        "s": model.s,
        "dim": model.dim,
        "seed": None if model.seed is None else int(model.seed),
        "coupling": model.coupling,
        "convention": model.convention,
        "kernel": None if model.kernel is None else kernel_to_dict(model.kernel),
    }


def save_model(model, path):
    """Write a model as ``.npz`` (matrices plus JSON metadata)."""
    arrays = {"W_pos": model.W_pos, "meta": np.array(json.dumps(_meta(model)))}
    if model.W_neg is not None:
        arrays["W_neg"] = model.W_neg
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        W_pos = data["W_pos"].copy()
        W_neg = data["W_neg"].copy() if "W_neg" in data.files else None
    kernel = kernel_from_dict(meta["kernel"]) if meta.get("kernel") else None
    return FeatureModel(
        method=meta["method"],
        W_pos=W_pos,
        W_neg=W_neg,
        mass_pos=float(meta["mass_pos"]),
        mass_neg=float(meta["mass_neg"]),
        kernel=kernel,
        seed=meta.get("seed"),
        coupling=meta.get("coupling", "paper"),
        convention=meta.get("convention", "jacobian"),
    )


def model_bytes(model):
    buf = io.BytesIO()
    arrays = {"W_pos": model.W_pos, "meta": np.array(json.dumps(_meta(model)))}
    if model.W_neg is not None:
        arrays["W_neg"] = model.W_neg
    np.savez(buf, **arrays)
    return buf.getvalue()


# --------------------------------------------------------------------------
# Estimator
# --------------------------------------------------------------------------

class GeneralizedRandomFeatures(TransformerMixin, BaseEstimator):
    """Random feature map for a stationary kernel, definite or not.

    Parameters
    ----------
    kernel : kernel object or str
        A kernel from :mod:`gorf.kernels` or an inline description such as
        ``"delta-gaussian:coefs=1,-1;sigmas=1,10"``.
    n_components : int, optional
        Number of frequencies ``s`` per part. Defaults to the input dimension.
        The output has ``4 * n_components`` columns.
    method : {"gorf", "grff", "orf", "rff"}
    coupling : {"paper", "block"}
        How ``gorf`` couples the positive and negative frequencies.
    convention : {"jacobian", "radial"}
        Spectral mass convention; see :mod:`gorf.spectrum`.
    random_state : int, Generator or None

    Attributes
    ----------
    model_ : FeatureModel
    signature_ : ndarray of shape (4 * n_components,)
    """

    def __init__(self, kernel="gaussian", n_components=None, method="gorf",
                 coupling="paper", convention="jacobian", random_state=None):
        self.kernel = kernel
        self.n_components = n_components
        self.method = method
        self.coupling = coupling
        self.convention = convention
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        d = X.shape[1]
        spec = parse_kernel(self.kernel) if isinstance(self.kernel, str) else self.kernel
        s = d if self.n_components is None else int(self.n_components)
        self.model_ = build_features(spec, s, self.random_state, self.method, dim=d,
                                     coupling=self.coupling, convention=self.convention)
        self.signature_ = signature(self.model_)
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return lift(self.model_, X)

    def approx_gram(self, X, Y=None):
        check_is_fitted(self, "model_")
        return approx_gram(self.model_, check_array(X, dtype=float),
                           None if Y is None else check_array(Y, dtype=float))

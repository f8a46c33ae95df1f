"""Numerical primitives shared by every other module.

Special functions are thin, domain-checked wrappers over ``scipy.special``.
Quadrature is an adaptive Gauss-Kronrod scheme with a rational map for
semi-infinite ranges. Randomness always flows through
``numpy.random.Generator`` objects created here, so a seed fully determines
every draw.
"""

from __future__ import annotations

import heapq
import math

import numpy as np
from scipy import special

from .exceptions import DomainError, IntegrationError, RankDeficiencyError

__all__ = [
    "make_rng",
    "split_rng",
    "bessel_j",
    "gamma_fn",
    "radial_char_fn",
    "sphere_area",
    "qr_orthonormal",
    "integrate",
    "gauss_legendre_cells",
    "sample_gaussian_matrix",
]


# --------------------------------------------------------------------------
# Random streams
# --------------------------------------------------------------------------

def make_rng(seed=None):
    """Return a PCG64 generator for ``seed``.

    Generators pass through unchanged so functions can accept either.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def split_rng(seed, index):
    """Independent stream keyed by ``(seed, index)``.

    Used for per-trial and per-repetition streams so results do not depend
    on scheduling or thread count.
    """
    if seed is None:
        raise ValueError("split_rng needs an explicit integer seed")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def sample_gaussian_matrix(rng, rows, cols):
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    return make_rng(rng).standard_normal((rows, cols))


# --------------------------------------------------------------------------
# Special functions
# --------------------------------------------------------------------------

def bessel_j(order, x):
    """Bessel function of the first kind ``J_order(x)`` for real order >= 0."""
    order_arr = np.asarray(order, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(order_arr)) and np.all(np.isfinite(x_arr))):
        raise DomainError("bessel_j requires finite order and argument")
    if np.any(order_arr < 0):
        raise DomainError("bessel_j is defined here for order >= 0 only")
    if np.any(x_arr < 0):
        raise DomainError("bessel_j requires x >= 0")
    out = special.jv(order_arr, x_arr)
    return float(out) if np.ndim(out) == 0 else out


def gamma_fn(x):
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)) or np.any(x_arr <= 0):
        raise DomainError("gamma_fn requires finite x > 0")
    out = special.gamma(x_arr)
    return float(out) if np.ndim(out) == 0 else out


def sphere_area(d):
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def radial_char_fn(d, u):
    """Average of ``cos(r * <theta, e>)`` over directions uniform on S^{d-1}.

    Equals ``Gamma(d/2) (2/u)^(d/2-1) J_{d/2-1}(u)`` with ``u = r * |z|``.
    Small arguments use the hypergeometric series ``0F1(; d/2; -u^2/4)``,
    which has no cancellation while ``u^2 / 4 <= d / 2``.
    """
    if d < 1:
        raise DomainError("dimension must be >= 1")
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise DomainError("radial_char_fn requires finite u >= 0")
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    out = np.empty_like(u)

    half = d / 2.0
    small = u * u <= 2.0 * d
    if np.any(small):
        q = -0.25 * u[small] ** 2
        term = np.ones_like(q)
        acc = np.ones_like(q)
        for k in range(400):
            term = term * q / ((k + 1.0) * (half + k))
            acc += term
            if np.all(np.abs(term) <= 1e-17 * np.maximum(1.0, np.abs(acc))):
                break
        out[small] = acc
    large = ~small
    if np.any(large):
        ul = u[large]
        nu = half - 1.0
        j = special.jv(nu, ul)
        with np.errstate(divide="ignore"):
            logmag = math.lgamma(half) + nu * np.log(2.0 / ul) + np.log(np.abs(j))
        out[large] = np.sign(j) * np.exp(logmag)
    return float(out[0]) if scalar else out


# --------------------------------------------------------------------------
# Dense linear algebra
# --------------------------------------------------------------------------

def qr_orthonormal(M):
    """Orthonormal factor of a square matrix with a nonnegative R diagonal.

    Raises ``RankDeficiencyError`` when a pivot of R is negligible relative
    to the largest one (or underflows below 1e-300).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"qr_orthonormal expects a square matrix, got {M.shape}")
    Q, R = _qr_signed(M[None])
    return Q[0]


def _qr_signed(M):
    """Batched QR of ``(..., n, n)`` matrices, signs fixed so diag(R) >= 0."""
    Q, R = np.linalg.qr(M)
    diag = np.diagonal(R, axis1=-2, axis2=-1)
    mag = np.abs(diag)
    n = M.shape[-1]
    floor = np.maximum(n * np.finfo(float).eps * mag.max(axis=-1, keepdims=True), 1e-300)
    if np.any(mag <= floor):
        raise RankDeficiencyError("matrix is rank deficient: a QR pivot vanished")
    signs = np.where(diag < 0, -1.0, 1.0)
    return Q * signs[..., None, :], R * signs[..., :, None]


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------

# 15-point Kronrod nodes (nonnegative half) and weights, with the embedded
# 7-point Gauss weights on the odd-indexed nodes.
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
_WG15[[1, 3, 5]] = _WG[:3]
_WG15[7] = _WG[3]
_WG15[[9, 11, 13]] = _WG[:3][::-1]


def _gk15(g, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    vals = np.asarray(g(mid + half * _NODES), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise IntegrationError(f"integrand is not finite on [{a}, {b}]")
    kron = half * np.dot(_WK, vals)
    gauss = half * np.dot(_WG15, vals)
    resabs = abs(half) * np.dot(_WK, np.abs(vals))
    return kron, abs(kron - gauss), resabs


def integrate(f, a, b, rel_tol=1e-10, abs_tol=0.0, max_intervals=2000):
    """Adaptive Gauss-Kronrod (7/15) quadrature of a vectorized ``f``.

    An infinite upper limit is mapped to [0, 1) with ``r = a + u / (1 - u)``.
    The interval with the largest error estimate is bisected until the
    summed estimate falls below ``max(rel_tol * |I|, abs_tol)``, with a
    roundoff floor proportional to the integral of ``|f|``.

    Raises ``IntegrationError`` after ``max_intervals`` subintervals.
    """
    if not (np.isfinite(a)):
        raise DomainError("lower limit must be finite")
    if b == a:
        return 0.0
    if np.isinf(b):
        if b < 0:
            raise DomainError("upper limit -inf is not supported")

        def g(u):
            t = 1.0 - u
            return f(a + u / t) / (t * t)

        lo, hi = 0.0, 1.0
    else:
        g, lo, hi = f, float(a), float(b)

    value, err, resabs = _gk15(g, lo, hi)
    heap = [(-err, lo, hi, value, err, resabs)]
    total, total_err, total_abs = value, err, resabs
    eps = np.finfo(float).eps
    while True:
        tol = max(rel_tol * abs(total), abs_tol, 50.0 * eps * total_abs)
        if total_err <= tol:
            return float(total)
        if len(heap) >= max_intervals:
            raise IntegrationError(
                f"quadrature did not converge on [{a}, {b}] within {max_intervals} "
                f"intervals (error estimate {total_err:.3g}, target {tol:.3g})"
            )
        _, x0, x1, v, e, ra = heapq.heappop(heap)
        xm = 0.5 * (x0 + x1)
        v1, e1, r1 = _gk15(g, x0, xm)
        v2, e2, r2 = _gk15(g, xm, x1)
        total += v1 + v2 - v
        total_err += e1 + e2 - e
        total_abs += r1 + r2 - ra
        heapq.heappush(heap, (-e1, x0, xm, v1, e1, r1))
        heapq.heappush(heap, (-e2, xm, x1, v2, e2, r2))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def gauss_legendre_cells(f, edges):
    """Integral of ``f`` over each cell ``[edges[i], edges[i+1]]``.

    Fixed 10-point Gauss-Legendre per cell, evaluated in one vectorized call.
    Accurate when ``f`` is smooth inside every cell.
    """
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = np.asarray(f(pts), dtype=float)
    return half * (vals @ _GL_W)

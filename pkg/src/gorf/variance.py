"""Variance of random-feature kernel estimates: closed forms and Monte Carlo.

For a lag ``z`` with ``t = |z|`` write ``a_i = cos(w_i . z)`` and
``b_i = cos(v_i . z)``. The i.i.d. estimator has variance

    m+^2/s [(1 + k+(2t))/2 - k+(t)^2] + m-^2/s [(1 + k-(2t))/2 - k-(t)^2]

where ``k+`` and ``k-`` are the normalized part transforms (``tilde_k``).
Coupling the directions leaves every marginal unchanged, so the variance
changes only through the pair covariances::

    gap = (s-1)/s [m+^2 C_aa + m-^2 C_bb] - 2 m+ m- C_ab

For exactly orthogonal positive directions ``C_aa`` has the closed form
``E[Omega(sqrt(R1^2 + R2^2) t)] - k+(t)^2`` (see :func:`g_k`). The cross
term ``-2 m+ m- C_ab`` is :func:`h_term`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ZeroMassError
from .features import (
    batch_estimates,
    draw_directions,
    sample_norm_pairs,
)
from .numerics import integrate, make_rng, radial_char_fn, split_rng
from .spectrum import _safe, normalized_part, spectrum_for

__all__ = [
    "radial_char_fn",
    "tilde_k",
    "var_grff_closed",
    "g_k",
    "h_term",
    "pair_covariances",
    "variance_gap",
    "empirical_variance",
    "paired_variance_difference",
    "Estimate",
    "VarianceReport",
    "variance_report",
]

# Models per vectorized chunk; keeps the 2m x 2m QR batches near 50 MB.
_CHUNK_BYTES = 50_000_000


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate with its standard error."""

    value: float
    stderr: float
    n: int = 0
    method: str = "monte-carlo"

    def __float__(self):
        return float(self.value)


def _spectrum(spec_or_spectrum, dim=None, convention="jacobian"):
    if hasattr(spec_or_spectrum, "mass_pos"):
        return spec_or_spectrum
    return spectrum_for(spec_or_spectrum, dim, convention)


def _chunks(total, d, s):
    m = max(s, d)
    per = max(1, _CHUNK_BYTES // (8 * (4 * m * m + 4 * d * s)))
    done = 0
    while done < total:
        n = min(per, total - done)
        yield n
        done += n


def _lag(d, z_norm):
    z = np.zeros(d)
    z[0] = z_norm
    return z


# --------------------------------------------------------------------------
# Quadrature quantities
# --------------------------------------------------------------------------

def tilde_k(spectrum, sign, z_norm):
    """``E[Omega_d(R t)]`` with ``R`` from one normalized part, by quadrature."""
    density = normalized_part(spectrum, sign)
    d = spectrum.dim
    edges = (0.0,) + spectrum.roots + (spectrum.support, math.inf)
    z = np.atleast_1d(np.asarray(z_norm, dtype=float))
    out = np.empty_like(z)
    for i, t in enumerate(z):
        if t == 0:
            out[i] = 1.0
            continue
        f = _safe(lambda r, t=t: density(r) * radial_char_fn(d, r * t))
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            if b > a:
                total += integrate(f, a, b, rel_tol=1e-11, abs_tol=1e-14, max_intervals=4000)
        out[i] = total
    return float(out[0]) if np.ndim(z_norm) == 0 else out


def _tilde_pair(spectrum, z_norm):
    kp = tilde_k(spectrum, 1, z_norm)
    kn = tilde_k(spectrum, -1, z_norm) if spectrum.mass_neg > 0 else 0.0
    return kp, kn


def var_grff_closed(spectrum, z_norm, s):
    """Variance of the i.i.d. estimator at lag norm ``z_norm``."""
    if s < 1:
        raise ValueError("s must be >= 1")
    out = 0.0
    for sign, mass in ((1, spectrum.mass_pos), (-1, spectrum.mass_neg)):
        if mass > 0:
            k1 = tilde_k(spectrum, sign, z_norm)
            k2 = tilde_k(spectrum, sign, 2.0 * z_norm)
            out += mass**2 / s * ((1.0 + k2) / 2.0 - k1 * k1)
    return out


# --------------------------------------------------------------------------
# Coupled terms
# --------------------------------------------------------------------------

def g_k(spectrum, sign, s, z_norm, rng=None, trials=100_000):
    """Variance change from exactly orthogonal coupling of one normalized part.

    ``(s-1)/s * (E[Omega(sqrt(R1^2 + R2^2) t)] - k(t)^2)`` with ``R1, R2``
    independent norm draws. Valid when the ``s`` directions are mutually
    orthogonal (``s <= d``). Negative whenever orthogonality helps.

    ``k(t)^2`` is estimated as ``E[Omega(R1 t) Omega(R2 t)]`` on the same
    draws, a control variate that removes most of the noise.
    """
    if trials < 1000:
        raise ValueError("g_k needs at least 1000 trials")
    if s == 1 or z_norm == 0:
        return Estimate(0.0, 0.0, trials)
    rng = make_rng(rng)
    sampler = spectrum.sampler(sign)
    r1 = sampler.quantile(rng.random(trials))
    r2 = sampler.quantile(rng.random(trials))
    d = spectrum.dim
    vals = (radial_char_fn(d, np.hypot(r1, r2) * z_norm)
            - radial_char_fn(d, r1 * z_norm) * radial_char_fn(d, r2 * z_norm))
    f = (s - 1) / s
    return Estimate(f * vals.mean(), f * vals.std(ddof=1) / math.sqrt(trials), trials)


def _pair_means(a, b, s):
    sa = a.sum(axis=1)
    out = {"aa": (sa * sa - (a * a).sum(axis=1)) / (s * (s - 1)) if s > 1 else np.zeros(a.shape[0])}
    if b is not None:
        sb = b.sum(axis=1)
        out["bb"] = (sb * sb - (b * b).sum(axis=1)) / (s * (s - 1)) if s > 1 else np.zeros(b.shape[0])
        out["ab"] = sa * sb / (s * s)
    return out


def pair_covariances(spectrum, s, z_norm, rng=None, trials=10_000, method="gorf",
                     coupling="paper", control=True):
    """Per-model estimates of the pair covariances ``C_aa``, ``C_bb``, ``C_ab``.

    Each model drawn from the feature sampler contributes the average of
    ``(a_i - k+)(a_j - k+)`` over ``i != j`` (likewise for ``b``) and of
    ``(a_i - k+)(b_j - k-)`` over all ``i, j``, with ``k+`` and ``k-`` from
    quadrature. With ``control`` the same averages under independent
    directions on the same norms (expectation zero) are subtracted.
    Returns a dict of arrays of length ``trials``.
    """
    rng = make_rng(rng)
    d = spectrum.dim
    signed = spectrum.mass_neg > 0
    kp, kn = _tilde_pair(spectrum, z_norm)
    z = _lag(d, z_norm)

    def centered(r_pos, r_neg, U, V):
        a = np.cos(r_pos * (z @ U)) - kp
        b = np.cos(r_neg * (z @ V)) - kn if signed else None
        return _pair_means(a, b, s)

    acc = {}
    for n in _chunks(trials, d, s):
        r_pos, r_neg = sample_norm_pairs(spectrum, rng, n, s)
        got = centered(r_pos, r_neg, *draw_directions(method, rng, n, d, s, signed, coupling))
        if control:
            base = centered(r_pos, r_neg, *draw_directions("grff", rng, n, d, s, signed))
            got = {k: got[k] - base[k] for k in got}
        for k, v in got.items():
            acc.setdefault(k, []).append(v)
    return {k: np.concatenate(v) for k, v in acc.items()}


def h_term(spectrum, s, z_norm, rng=None, trials=10_000, coupling="paper"):
    """Cross term ``2 m+ m- [k+(t) k-(t) - E(a_1 b_1)]`` of the coupled estimator.

    ``E(a_1 b_1) - k+ k-`` is the cross covariance, estimated under the
    coupled sampler by :func:`pair_covariances` (all ``s^2`` cross pairs of
    a model are exchangeable, so each model contributes their average).
    """
    if not (spectrum.mass_pos > 0 and spectrum.mass_neg > 0):
        raise ZeroMassError("the cross term needs both spectral parts to have positive mass")
    if trials < 1000:
        raise ValueError("h_term needs at least 1000 trials")
    if z_norm == 0:
        return Estimate(0.0, 0.0, trials)
    cab = pair_covariances(spectrum, s, z_norm, rng, trials, "gorf", coupling)["ab"]
    c = 2.0 * spectrum.mass_pos * spectrum.mass_neg
    return Estimate(-c * cab.mean(), c * cab.std(ddof=1) / math.sqrt(cab.size), cab.size)


def variance_gap(spectrum, s, z_norm, rng=None, trials=10_000, coupling="paper"):
    """``Var(coupled) - Var(i.i.d.)`` at lag norm ``z_norm``.

    Assembled as ``m+^2 G+ + m-^2 G- + H``. In the exactly orthogonal case
    (positive definite kernel or ``coupling="block"``, with ``s <= d``) the
    ``G`` terms come from :func:`g_k`. Otherwise all three pair covariances
    are estimated jointly under the sampler so that their correlation enters
    the standard error.
    """
    if z_norm == 0:
        return Estimate(0.0, 0.0, trials, "exact")
    rng = make_rng(rng)
    mp, mn = spectrum.mass_pos, spectrum.mass_neg
    signed = mn > 0
    if _orthogonal_case(spectrum, s, coupling):
        parts = [(mp**2, g_k(spectrum, 1, s, z_norm, rng, trials))]
        if signed:
            parts.append((mn**2, g_k(spectrum, -1, s, z_norm, rng, trials)))
            parts.append((1.0, h_term(spectrum, s, z_norm, rng, trials, coupling)))
        value = sum(w * e.value for w, e in parts)
        se = math.sqrt(sum((w * e.stderr) ** 2 for w, e in parts))
        return Estimate(value, se, trials, "orthogonal closed form + monte-carlo")

    cov = pair_covariances(spectrum, s, z_norm, rng, trials, "gorf", coupling)
    f = (s - 1) / s
    per = f * mp**2 * cov["aa"]
    if signed:
        per = per + f * mn**2 * cov["bb"] - 2 * mp * mn * cov["ab"]
    return Estimate(per.mean(), per.std(ddof=1) / math.sqrt(per.size), per.size,
                    "sampler monte-carlo")


def _orthogonal_case(spectrum, s, coupling):
    return s <= spectrum.dim and (spectrum.mass_neg == 0 or coupling == "block")


# --------------------------------------------------------------------------
# Empirical variances
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EmpiricalVariance:
    mean: float
    variance: float
    stderr: float
    mean_stderr: float
    trials: int

    def __iter__(self):
        return iter((self.mean, self.variance, self.stderr))


def _jackknife_var_se(x):
    """Jackknife standard error of the unbiased sample variance."""
    n = x.size
    dev2 = (x - x.mean()) ** 2
    S = dev2.sum()
    loo = (S - n / (n - 1) * dev2) / (n - 2)
    return math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))


def _estimates(spectrum, s, method, z, trials, rng, coupling, norms=None):
    d = spectrum.dim
    signed = spectrum.mass_neg > 0
    out = []
    start = 0
    for n in _chunks(trials, d, s):
        if norms is None:
            r_pos, r_neg = sample_norm_pairs(spectrum, rng, n, s)
        else:
            r_pos = norms[0][start:start + n]
            r_neg = None if norms[1] is None else norms[1][start:start + n]
        U, V = draw_directions(method, rng, n, d, s, signed, coupling)
        Wp = U * r_pos[:, None, :]
        Wn = V * r_neg[:, None, :] if signed else None
        out.append(batch_estimates(Wp, Wn, spectrum.mass_pos, spectrum.mass_neg, z))
        start += n
    return np.concatenate(out)


def empirical_variance(method, spectrum, x, y, s, trials=10_000, rng=None, coupling="paper"):
    """Mean and variance of the kernel estimate over independent models."""
    if trials < 100:
        raise ValueError("empirical_variance needs at least 100 trials")
    z = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    est = _estimates(spectrum, s, method.lower(), z, trials, make_rng(rng), coupling)
    mean = float(est.mean())
    var = float(np.mean((est - mean) ** 2) * trials / (trials - 1))
    return EmpiricalVariance(mean, var, _jackknife_var_se(est),
                             float(est.std(ddof=1) / math.sqrt(trials)), trials)


def paired_variance_difference(spectrum, s, z_norm, trials=20_000, rng=None,
                               methods=("gorf", "grff"), coupling="paper"):
    """``Var(methods[0]) - Var(methods[1])`` with shared norm draws.

    Sharing the norms between the two builders correlates the two variance
    estimates, which tightens the jackknife error of their difference.
    """
    rng = make_rng(rng)
    d = spectrum.dim
    z = _lag(d, z_norm)
    norms = sample_norm_pairs(spectrum, rng, trials, s)
    e1 = _estimates(spectrum, s, methods[0], z, trials, rng, coupling, norms)
    e2 = _estimates(spectrum, s, methods[1], z, trials, rng, coupling, norms)
    n = trials
    d1 = (e1 - e1.mean()) ** 2
    d2 = (e2 - e2.mean()) ** 2
    diff = (d1.sum() - d2.sum()) / (n - 1)
    loo = ((d1.sum() - n / (n - 1) * d1) - (d2.sum() - n / (n - 1) * d2)) / (n - 2)
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return Estimate(float(diff), se, n, "paired monte-carlo")


# --------------------------------------------------------------------------
# Report
# --------------------------------------------------------------------------

CSV_COLUMNS = (
    "z_norm", "var_grff_closed", "var_grff_mc", "var_grff_mc_se",
    "var_gorf_mc", "var_gorf_mc_se", "gap_closed", "gap_closed_se",
    "gap_mc", "gap_mc_se",
)


@dataclass
class VarianceReport:
    z_norm: np.ndarray
    columns: dict
    s: int
    dim: int
    kernel: object
    trials: int
    seed: int
    coupling: str = "paper"
    convention: str = "jacobian"
    estimators: dict = field(default_factory=dict)

    def rows(self):
        for i, z in enumerate(self.z_norm):
            yield [z] + [self.columns[c][i] for c in CSV_COLUMNS[1:]]

    def to_csv(self, path_or_file, config=None):
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            for key, value in (config or {}).items():
                fh.write(f"# {key}={value}\n")
            for key, value in self.estimators.items():
                fh.write(f"# estimator.{key}={value}\n")
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows():
                writer.writerow([f"{v:.10g}" for v in row])
        finally:
            if own:
                fh.close()


def variance_report(spec, dim, s, z_grid, trials=10_000, seed=0, coupling="paper",
                    convention="jacobian"):
    """Variance quantities on a grid of lag norms (the sign-of-gap data product)."""
    z_grid = np.asarray(z_grid, dtype=float)
    if z_grid.ndim != 1 or np.any(np.diff(z_grid) <= 0):
        raise ValueError("z grid must be strictly increasing")
    spectrum = _spectrum(spec, dim, convention)
    signed = spectrum.mass_neg > 0
    iid, cpl = ("grff", "gorf") if signed else ("rff", "orf")
    cols = {c: np.zeros(z_grid.size) for c in CSV_COLUMNS[1:]}
    for i, t in enumerate(z_grid):
        z = _lag(spectrum.dim, t)
        cols["var_grff_closed"][i] = var_grff_closed(spectrum, t, s)
        for name, method, idx in (("grff", iid, 1), ("gorf", cpl, 2)):
            ev = empirical_variance(method, spectrum, z, np.zeros_like(z), s, trials,
                                    split_rng(seed, 3 * i + idx), coupling)
            cols[f"var_{name}_mc"][i] = ev.variance
            cols[f"var_{name}_mc_se"][i] = ev.stderr
        gap = variance_gap(spectrum, s, t, split_rng(seed, 3 * i + 3), trials, coupling)
        cols["gap_closed"][i] = gap.value
        cols["gap_closed_se"][i] = gap.stderr
        paired = paired_variance_difference(spectrum, s, t, trials, split_rng(seed, 10**6 + i),
                                            (cpl, iid), coupling)
        cols["gap_mc"][i] = paired.value
        cols["gap_mc_se"][i] = paired.stderr
    exact = _orthogonal_case(spectrum, s, coupling)
    estimators = {
        "var_grff_closed": "quadrature",
        "var_mc": "independent models, jackknife stderr",
        "gap_closed": ("orthogonal closed form (R1,R2 monte-carlo) + cross term monte-carlo"
                       if exact else "pair covariances under the feature sampler"),
        "gap_mc": "paired empirical variance difference",
    }
    return VarianceReport(z_grid, cols, s, spectrum.dim, spectrum.kernel, trials, seed,
                          coupling, convention, estimators)

"""Radial signed spectral measures: Jordan parts, masses and norm sampling.

A stationary radial kernel has a radial spectral profile ``p(r)``. The
positive and negative Jordan parts are ``max(0, p)`` and ``max(0, -p)``.
Two conventions turn a part into a distribution over the weight norm:

``"jacobian"`` (default)
    norm density ``S_{d-1} r^{d-1} p_+(r) / |p_+|``, the law of ``|w|`` when
    ``w`` has density ``p_+`` on R^d. Reconstruction of ``k`` is exact.
``"radial"``
    norm density ``p_+(r) / |p_+|`` with masses ``int_0^inf p_+(r) dr``.
    Finite for some kernels whose d-dimensional mass diverges, but biased.

After quadrature both masses are multiplied by one common factor so the
measure reproduces ``k`` at a reference lag, which absorbs any missing
Fourier normalization.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import (
    InfiniteMassError,
    IntegrationError,
    TabulationError,
    ZeroMassError,
)
from .numerics import (
    gauss_legendre_cells,
    integrate,
    make_rng,
    radial_char_fn,
    sphere_area,
)

__all__ = [
    "RadialSignedSpectrum",
    "NormSampler",
    "jordan_decompose",
    "build_spectrum",
    "spectrum_for",
    "total_masses",
    "normalized_part",
    "build_norm_sampler",
    "sample_norms",
    "reconstruct",
    "write_spectrum_csv",
]

CONVENTIONS = ("jacobian", "radial")

# Scan limits for locating the support and sign changes of a profile.
_SCAN_LIMIT = 1e4
_SCAN_POINTS = 40001
_NEGLIGIBLE = 1e-10


def jordan_decompose(profile):
    """Split a profile into ``(max(0, p), max(0, -p))``."""

    def pos(r):
        return np.maximum(0.0, profile(r))

    def neg(r):
        return np.maximum(0.0, -np.asarray(profile(r)))

    return pos, neg


def _radial_weight(d, convention):
    if convention == "radial":
        return lambda r: np.ones_like(np.asarray(r, dtype=float))
    area = sphere_area(d)
    log_area = math.log(area)

    def weight(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.exp(log_area + (d - 1) * np.log(r)) if d > 1 else np.full_like(r, area)

    return weight


def _safe(f):
    """Wrap ``f`` so that inf * 0 products at extreme radii become 0."""

    def g(r):
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            v = np.asarray(f(r), dtype=float)
        return np.where(np.isfinite(v), v, 0.0)

    return g


def _find_support(weighted_abs):
    """Radius beyond which the weighted profile is negligible.

    Doubles an outer radius until the largest value seen on the latest
    octave falls below ``_NEGLIGIBLE`` times the running peak. Failure to
    decay before ``_SCAN_LIMIT`` signals an infinite (or unresolvable) mass.
    """
    peak = 0.0
    hi = 1.0 / 64
    while hi <= _SCAN_LIMIT:
        r = np.linspace(hi / 2, hi, 257)
        band = float(np.max(weighted_abs(r) * r))
        peak = max(peak, band)
        if peak > 0 and band <= _NEGLIGIBLE * peak and hi >= 1.0:
            return hi
        hi *= 2
    if peak == 0:
        raise ZeroMassError("spectral profile is identically zero")
    raise InfiniteMassError(
        "spectral profile does not decay: the Jordan parts have infinite mass "
        "under the chosen convention (no positive decomposition)"
    )


def _sign_changes(profile, hi):
    r = np.linspace(0.0, hi, _SCAN_POINTS)
    v = profile(r)
    s = np.sign(v)
    # Carry signs through exact zeros so underflowed tails are not roots.
    for i in range(1, s.size):
        if s[i] == 0:
            s[i] = s[i - 1]
    idx = np.nonzero(s[1:] * s[:-1] < 0)[0]
    roots = []
    for i in idx:
        lo, up = r[i], r[i + 1]
        flo = v[i]
        for _ in range(200):
            mid = 0.5 * (lo + up)
            fm = float(profile(np.array([mid]))[0])
            if fm == 0.0:
                lo = up = mid
                break
            if (fm > 0) == (flo > 0):
                lo, flo = mid, fm
            else:
                up = mid
            if up - lo <= 1e-12 * max(1.0, mid):
                break
        roots.append(float(0.5 * (lo + up)))
    return tuple(roots)


def _piecewise_integral(f, edges, rel_tol=1e-12):
    """Integral of ``f`` over consecutive cells of ``edges``; last may be inf.

    Cells after the first are integrated to an absolute tolerance tied to
    the running magnitude, so tiny oscillating tails do not stall.
    """
    total = 0.0
    scale = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        # The tail beyond the support holds at most ~_NEGLIGIBLE of the mass.
        tol = _NEGLIGIBLE if math.isinf(b) else rel_tol * 1e-2
        part = integrate(f, a, b, rel_tol=rel_tol, abs_tol=tol * scale, max_intervals=4000)
        total += part
        scale += abs(part)
    return total


@dataclass(frozen=True)
class RadialSignedSpectrum:
    """Calibrated radial spectral measure of a stationary kernel on R^d.

    ``raw_profile`` is the uncalibrated density; ``profile`` includes the
    common calibration factor ``scale``. Masses are those of the calibrated
    Jordan parts.
    """

    raw_profile: object
    dim: int
    k0: float
    convention: str
    scale: float
    roots: tuple
    support: float
    mass_pos: float
    mass_neg: float
    kernel: object = field(default=None, compare=False)

    def profile(self, r):
        return self.scale * self.raw_profile(r)

    def pos_profile(self, r):
        return np.maximum(0.0, self.profile(r))

    def neg_profile(self, r):
        return np.maximum(0.0, -np.asarray(self.profile(r)))

    def weight(self, r):
        return _radial_weight(self.dim, self.convention)(r)

    @property
    def total_mass(self):
        return self.mass_pos + self.mass_neg

    @property
    def is_positive(self):
        return self.mass_neg == 0.0

    def mass(self, sign):
        return self.mass_pos if _sign(sign) > 0 else self.mass_neg

    @cached_property
    def _samplers(self):
        return {}

    def sampler(self, sign, rel_tail_tol=1e-8, n_grid=4096):
        key = (_sign(sign), rel_tail_tol, n_grid)
        if key not in self._samplers:
            density = normalized_part(self, sign)
            self._samplers[key] = build_norm_sampler(
                density,
                rel_tail_tol=rel_tail_tol,
                n_grid=n_grid,
                breakpoints=self.roots,
                tag="positive" if key[0] > 0 else "negative",
                hint=self.support,
            )
        return self._samplers[key]


def _sign(sign):
    if sign in (1, "+", "pos", "positive"):
        return 1
    if sign in (-1, "-", "neg", "negative"):
        return -1
    raise ValueError(f"sign must be positive or negative, got {sign!r}")


def build_spectrum(profile, dim, k0, kernel_profile=None, convention="jacobian",
                   calibrate=True, kernel=None, lag_domain=None):
    """Jordan-decompose ``profile`` and compute calibrated masses.

    ``kernel_profile`` (``t -> k(t)``) is needed for calibration when
    ``k0`` is zero; ``lag_domain`` bounds the lags used for it.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    d = int(dim)
    profile = _safe(profile)
    weight = _radial_weight(d, convention)
    weighted_abs = _safe(lambda r: weight(r) * np.abs(profile(r)))
    support = _find_support(weighted_abs)
    roots = _sign_changes(profile, support)
    edges = (0.0,) + roots + (support, math.inf)

    pos_w = _safe(lambda r: weight(r) * np.maximum(0.0, profile(r)))
    neg_w = _safe(lambda r: weight(r) * np.maximum(0.0, -profile(r)))
    try:
        raw_pos = _piecewise_integral(pos_w, edges)
        raw_neg = _piecewise_integral(neg_w, edges)
    except IntegrationError as exc:
        raise InfiniteMassError(f"mass quadrature failed: {exc}") from exc
    if raw_pos + raw_neg <= 0:
        raise ZeroMassError("spectral profile has zero total mass")

    scale = 1.0
    if calibrate:
        diff = raw_pos - raw_neg
        if abs(k0) > 1e-6 * (raw_pos + raw_neg) and diff != 0:
            scale = k0 / diff
        elif kernel_profile is not None:
            scale = _calibrate_at_lag(profile, weight, d, edges, kernel_profile, support, lag_domain)
        if not scale > 0:
            raise ZeroMassError("calibration produced a non-positive scale")

    return RadialSignedSpectrum(
        raw_profile=profile,
        dim=d,
        k0=float(k0),
        convention=convention,
        scale=float(scale),
        roots=roots,
        support=float(support),
        mass_pos=float(scale * raw_pos),
        mass_neg=float(scale * raw_neg),
        kernel=kernel,
    )


def _calibrate_at_lag(profile, weight, d, edges, kernel_profile, support, lag_domain):
    hi = lag_domain if lag_domain is not None else 8.0 / support * 10
    lags = np.linspace(hi / 200, hi, 200)
    vals = np.abs(kernel_profile(lags))
    t_ref = float(lags[np.argmax(vals >= 0.5 * vals.max())])
    f = _safe(lambda r: weight(r) * profile(r) * radial_char_fn(d, r * t_ref))
    recon = _piecewise_integral(f, edges)
    return float(kernel_profile(t_ref)) / recon


@functools.lru_cache(maxsize=64)
def spectrum_for(kernel, dim=None, convention="jacobian"):
    """Cached spectrum of a built-in kernel in dimension ``dim``."""
    d = dim if dim is not None else kernel.dim
    if d is None:
        raise ValueError("the input dimension must be known to build a spectrum")
    d = int(d)
    lag_domain = 2.0 if kernel.variant == "polynomial" else None
    return build_spectrum(
        lambda r: kernel.spectral_density(r, d),
        d,
        kernel.k0,
        kernel_profile=kernel.profile,
        convention=convention,
        kernel=kernel,
        lag_domain=lag_domain,
    )


def total_masses(spectrum):
    return spectrum.mass_pos, spectrum.mass_neg


def normalized_part(spectrum, sign):
    """Probability density of the norm under one Jordan part."""
    sgn = _sign(sign)
    mass = spectrum.mass(sgn)
    if not mass > 0:
        part = "positive" if sgn > 0 else "negative"
        raise ZeroMassError(f"the {part} part of this spectrum has zero mass")
    weight = _radial_weight(spectrum.dim, spectrum.convention)
    part = spectrum.pos_profile if sgn > 0 else spectrum.neg_profile
    return _safe(lambda r: weight(r) * part(r) / mass)


@dataclass(frozen=True)
class NormSampler:
    """Tabulated inverse-CDF sampler on ``[0, r_max]``."""

    grid: np.ndarray
    cdf: np.ndarray
    r_max: float
    tag: str = "positive"

    def cdf_at(self, r):
        return np.interp(r, self.grid, self.cdf, left=0.0, right=1.0)

    def quantile(self, u):
        return np.interp(u, self._q_cdf, self._q_grid)

    @cached_property
    def _q_table(self):
        # Collapse flat CDF runs to their two end points so the inverse jumps
        # across zero-density gaps.
        c, g = self.cdf, self.grid
        keep = np.ones(c.size, dtype=bool)
        keep[1:-1] = ~((c[1:-1] == c[:-2]) & (c[1:-1] == c[2:]))
        return c[keep], g[keep]

    @property
    def _q_cdf(self):
        return self._q_table[0]

    @property
    def _q_grid(self):
        return self._q_table[1]


def build_norm_sampler(density, rel_tail_tol=1e-8, n_grid=4096, breakpoints=(),
                       tag="positive", hint=None):
    """Tabulate the CDF of a normalized norm density and invert it linearly.

    ``r_max`` is the smallest grid point with cumulative mass at least
    ``1 - rel_tail_tol``; the CDF is tabulated on ``n_grid`` log-spaced
    points below it, plus 0 and any ``breakpoints`` (kinks of the density).
    """
    density = _safe(density)
    hi = 1.0 if hint is None else float(hint)
    try:
        # The tail only has to be resolved well below the tolerance it is tested against.
        tail_tol = 1e-3 * rel_tail_tol
        tail = integrate(density, hi, math.inf, rel_tol=1e-8, abs_tol=tail_tol)
        while tail > 0.1 * rel_tail_tol:
            hi *= 2
            if hi > _SCAN_LIMIT:
                raise TabulationError("density tail does not reach the tolerance within the grid budget")
            tail = integrate(density, hi, math.inf, rel_tol=1e-8, abs_tol=tail_tol)
    except IntegrationError as exc:
        raise TabulationError(f"could not bound the density tail: {exc}") from exc

    bps = np.array([b for b in breakpoints if 0 < b < hi])
    pre = _grid(hi, 8 * n_grid, bps)
    cum = np.concatenate([[0.0], np.cumsum(gauss_legendre_cells(density, pre))])
    total = cum[-1] + tail
    if not total > 0:
        raise TabulationError("density integrates to zero")
    idx = int(np.searchsorted(cum / total, 1.0 - rel_tail_tol, side="left"))
    r_max = float(pre[min(idx, pre.size - 1)])

    grid = _grid(r_max, n_grid, bps[bps < r_max])
    cells = gauss_legendre_cells(density, grid)
    if np.any(cells < -1e-15):
        raise TabulationError("density is negative on part of the grid")
    cdf = np.concatenate([[0.0], np.cumsum(np.maximum(cells, 0.0))])
    if not cdf[-1] > 0:
        raise TabulationError("density has no mass below r_max")
    cdf /= cdf[-1]
    return NormSampler(grid=grid, cdf=cdf, r_max=r_max, tag=tag)


def _grid(hi, n, breakpoints):
    # Log spacing resolves mass near the origin; linear spacing the bulk.
    pts = np.concatenate([np.geomspace(hi * 1e-6, hi, n // 4), np.linspace(0.0, hi, n - n // 4)])
    return np.unique(np.concatenate([pts, np.asarray(breakpoints, dtype=float)]))


def sample_norms(sampler, rng, count):
    if count < 1:
        raise ValueError("count must be >= 1")
    u = make_rng(rng).random(count)
    return sampler.quantile(u)


def reconstruct(spectrum, z_norm):
    """``mass_pos * E_+[Omega(r z)] - mass_neg * E_-[Omega(r z)]`` by quadrature."""
    z = np.atleast_1d(np.asarray(z_norm, dtype=float))
    edges = (0.0,) + spectrum.roots + (spectrum.support, math.inf)
    out = []
    for t in z:
        f = _safe(lambda r, t=t: spectrum.weight(r) * spectrum.profile(r)
                  * radial_char_fn(spectrum.dim, r * t))
        out.append(_piecewise_integral(f, edges, rel_tol=1e-11))
    out = np.array(out)
    return float(out[0]) if np.ndim(z_norm) == 0 else out


def write_spectrum_csv(spectrum, path, n_points=512):
    """Dump ``r, p, p_pos, p_neg, cdf_pos, cdf_neg`` on a linear grid."""
    reach = [spectrum.sampler(sg).r_max for sg in (1, -1) if spectrum.mass(sg) > 0]
    r = np.linspace(0.0, 1.25 * max(reach), n_points)
    p = spectrum.profile(r)
    cols = {
        "r": r,
        "p": p,
        "p_pos": np.maximum(p, 0.0),
        "p_neg": np.maximum(-p, 0.0),
    }
    for name, sgn in (("cdf_pos", 1), ("cdf_neg", -1)):
        cols[name] = (spectrum.sampler(sgn).cdf_at(r) if spectrum.mass(sgn) > 0
                      else np.zeros_like(r))
    own = not hasattr(path, "write")
    fh = open(path, "w", newline="") if own else path
    try:
        writer = csv.writer(fh)
        writer.writerow(list(cols))
        for row in zip(*cols.values()):
            writer.writerow([f"{v:.12g}" for v in row])
    finally:
        if own:
            fh.close()

import csv
import io
import math

import numpy as np
import pytest
from scipy import integrate as sint
from scipy import stats

from gorf.exceptions import InfiniteMassError, ZeroMassError
from gorf.kernels import DeltaGaussian, Gaussian, PolynomialSphere
from gorf.numerics import sphere_area
from gorf.spectrum import (
    build_norm_sampler,
    build_spectrum,
    jordan_decompose,
    normalized_part,
    reconstruct,
    sample_norms,
    spectrum_for,
    total_masses,
    write_spectrum_csv,
)

DIMS = (2, 8, 16, 64)


def raw_delta(d, coefs, sigmas):
    """Closed-form signed Gaussian mixture density, written out independently."""

    def p(r):
        r = np.asarray(r, dtype=float)
        return sum(a * (s * s / (2 * math.pi)) ** (d / 2) * np.exp(-s * s * r * r / 2)
                   for a, s in zip(coefs, sigmas))

    return p


def quad_mass(d, f):
    area = sphere_area(d)
    val, _ = sint.quad(lambda r: area * r ** (d - 1) * f(r), 0, np.inf, limit=400,
                       epsabs=0, epsrel=1e-11)
    return val


class TestJordan:
    def test_gaussian_has_no_negative_part(self):
        pos, neg = jordan_decompose(lambda r: Gaussian().spectral_density(r, 4))
        r = np.linspace(0, 10, 501)
        assert np.all(neg(r) == 0)
        assert np.all(pos(r) > 0) or np.all(pos(r) >= 0)

    def test_nonpositive_profile(self):
        pos, neg = jordan_decompose(lambda r: -np.exp(-r))
        r = np.linspace(0, 5, 11)
        assert np.all(pos(r) == 0)
        assert np.allclose(neg(r), np.exp(-r))

    def test_parts_disjoint(self):
        pos, neg = jordan_decompose(raw_delta(16, (1, -1), (1, 10)))
        r = np.linspace(0, 20, 20001)
        assert np.all(pos(r) * neg(r) == 0)

    def test_delta_gaussian_root_against_bisection(self):
        p = raw_delta(2, (1, -1), (1, 10))
        lo, hi = 0.0, 5.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if p(lo) * p(mid) > 0:
                lo = mid
            else:
                hi = mid
        spec = spectrum_for(DeltaGaussian(), 2)
        assert len(spec.roots) == 1
        assert spec.roots[0] == pytest.approx(0.5 * (lo + hi), abs=1e-9)

    def test_polynomial_radial_has_many_roots(self):
        spec = spectrum_for(PolynomialSphere(3, 1), 16, convention="radial")
        assert len(spec.roots) > 10


class TestMasses:
    @pytest.mark.parametrize("d", DIMS)
    @pytest.mark.parametrize("sigma", [0.5, 1.0, 3.0])
    def test_gaussian(self, d, sigma):
        m_pos, m_neg = total_masses(spectrum_for(Gaussian(sigma), d))
        assert m_pos == pytest.approx(1.0, abs=1e-6)
        assert m_neg == 0.0

    @pytest.mark.parametrize("d", DIMS)
    @pytest.mark.parametrize("coefs,sigmas,k0", [((1, -1), (1, 10), 0.0),
                                                  ((2, -1), (1, 10), 1.0),
                                                  ((1, -0.5, 0.7), (0.5, 2, 4), 1.2)])
    def test_conservation(self, d, coefs, sigmas, k0):
        spec = spectrum_for(DeltaGaussian(coefs, sigmas), d)
        assert spec.mass_pos - spec.mass_neg == pytest.approx(k0, abs=1e-6)

    @pytest.mark.parametrize("d", [2, 8])
    @pytest.mark.parametrize("coefs,sigmas", [((2, -1), (1, 10)), ((1, -1), (1, 10)),
                                               ((1, -0.5, 0.7), (0.5, 2, 4))])
    def test_jordan_masses_against_quad(self, d, coefs, sigmas):
        p = raw_delta(d, coefs, sigmas)
        spec = spectrum_for(DeltaGaussian(coefs, sigmas), d)
        # The oracle integrates each Jordan part across its sign changes.
        pts = list(spec.roots)
        area = sphere_area(d)

        def part(f):
            edges = [0.0] + pts + [np.inf]
            return sum(sint.quad(lambda r: area * r ** (d - 1) * f(r), a, b, limit=400,
                                 epsabs=0, epsrel=1e-11)[0] for a, b in zip(edges[:-1], edges[1:]))

        assert spec.mass_pos == pytest.approx(part(lambda r: max(0.0, p(r))), rel=1e-7)
        assert spec.mass_neg == pytest.approx(part(lambda r: max(0.0, -p(r))), rel=1e-7)

    def test_delta_gaussian_sixteen_masses(self):
        spec = spectrum_for(DeltaGaussian(), 16)
        assert spec.mass_pos == pytest.approx(spec.mass_neg, abs=1e-6)
        assert 0.9 < spec.mass_pos <= 1.0
        assert spec.scale == pytest.approx(1.0, rel=1e-6)

    def test_polynomial_default_convention_infinite(self):
        with pytest.raises(InfiniteMassError):
            spectrum_for(PolynomialSphere(3, 1), 4)

    @pytest.mark.parametrize("d", [16, 32])
    def test_polynomial_radial_conservation(self, d):
        spec = spectrum_for(PolynomialSphere(3, 1), d, convention="radial")
        assert spec.mass_pos - spec.mass_neg == pytest.approx(1.0, abs=1e-6)
        assert spec.mass_neg > 0

    def test_zero_mass(self):
        with pytest.raises(ZeroMassError):
            build_spectrum(lambda r: np.zeros_like(np.asarray(r, float)), 3, 1.0)

    def test_growing_profile_is_infinite(self):
        with pytest.raises(InfiniteMassError):
            build_spectrum(lambda r: np.ones_like(np.asarray(r, float)), 3, 1.0)

    def test_bad_convention(self):
        with pytest.raises(ValueError):
            build_spectrum(lambda r: np.exp(-r), 2, 1.0, convention="nope")


class TestNormalizedParts:
    def test_negative_part_of_gaussian(self):
        with pytest.raises(ZeroMassError):
            normalized_part(spectrum_for(Gaussian(), 4), "negative")

    @pytest.mark.parametrize("sign", [1, -1])
    def test_densities_integrate_to_one(self, sign):
        spec = spectrum_for(DeltaGaussian(), 8)
        f = normalized_part(spec, sign)
        edges = [0.0, *spec.roots, np.inf]
        total = sum(sint.quad(lambda r: float(f(r)), a, b, limit=400)[0]
                    for a, b in zip(edges[:-1], edges[1:]))
        assert total == pytest.approx(1.0, rel=1e-8)

    def test_pointwise_definition(self):
        d = 16
        spec = spectrum_for(DeltaGaussian(), d)
        p = raw_delta(d, (1, -1), (1, 10))
        r = np.linspace(0.01, 8, 50)
        expected = sphere_area(d) * r ** (d - 1) * np.maximum(p(r), 0) / spec.mass_pos
        assert np.allclose(normalized_part(spec, 1)(r), expected, rtol=1e-6, atol=1e-300)


class TestSampler:
    def test_chi_mean(self):
        # Gaussian(1) in d=4: norms are chi distributed with 4 degrees of freedom.
        spec = spectrum_for(Gaussian(1.0), 4)
        r = sample_norms(spec.sampler(1), np.random.default_rng(0), 100_000)
        mean = math.sqrt(2) * math.gamma(2.5) / math.gamma(2.0)
        assert abs(r.mean() - mean) < 4 * r.std() / math.sqrt(r.size)

    def test_ks_against_chi(self):
        spec = spectrum_for(Gaussian(1.0), 8)
        r = sample_norms(spec.sampler(1), np.random.default_rng(1), 100_000)
        assert stats.kstest(r, stats.chi(8).cdf).statistic < 0.01

    def test_uniform_quantile(self):
        s = build_norm_sampler(lambda r: np.where((r >= 0) & (r <= 1), 1.0, 0.0),
                               breakpoints=(1.0,))
        u = np.linspace(0.01, 0.99, 50)
        assert np.allclose(s.quantile(u), u, atol=1e-4)

    @pytest.mark.parametrize("sign", [1, -1])
    def test_ks_against_tabulated_cdf(self, sign):
        spec = spectrum_for(DeltaGaussian(), 16)
        sampler = spec.sampler(sign)
        r = sample_norms(sampler, np.random.default_rng(2), 100_000)
        assert stats.kstest(r, sampler.cdf_at).statistic < 0.01

    def test_tabulated_cdf_matches_quadrature(self):
        spec = spectrum_for(DeltaGaussian(), 16)
        sampler = spec.sampler(-1)
        f = normalized_part(spec, -1)
        for x in (0.5, 1.0, 2.0):
            ref, _ = sint.quad(lambda r: float(f(r)), 0, x, limit=200)
            assert sampler.cdf_at(x) == pytest.approx(ref, abs=1e-6)

    def test_sampler_cached(self):
        spec = spectrum_for(Gaussian(), 3)
        assert spec.sampler(1) is spec.sampler("+")

    def test_count(self):
        with pytest.raises(ValueError):
            sample_norms(spectrum_for(Gaussian(), 3).sampler(1), 0, 0)


class TestReconstruction:
    @pytest.mark.parametrize("d", DIMS)
    @pytest.mark.parametrize("spec", [Gaussian(1.0), Gaussian(0.3), DeltaGaussian(),
                                      DeltaGaussian((2, -1), (1, 10))])
    def test_within_tolerance(self, d, spec):
        z = np.linspace(0, 2, 9)
        got = reconstruct(spectrum_for(spec, d), z)
        assert np.max(np.abs(got - spec.profile(z))) <= 1e-4

    def test_scalar(self):
        assert isinstance(reconstruct(spectrum_for(Gaussian(), 2), 0.5), float)


def test_csv_dump():
    buf = io.StringIO()
    write_spectrum_csv(spectrum_for(DeltaGaussian(), 4), buf, n_points=64)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == ["r", "p", "p_pos", "p_neg", "cdf_pos", "cdf_neg"]
    assert len(rows) == 65
    vals = np.array(rows[1:], dtype=float)
    assert np.all(np.diff(vals[:, 4]) >= 0) and vals[-1, 4] == pytest.approx(1.0)
    assert np.all(vals[:, 2] * vals[:, 3] == 0)

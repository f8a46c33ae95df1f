import math

import numpy as np
import pytest
from scipy import stats
from sklearn.base import clone
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import MinMaxScaler

from gorf.exceptions import DimensionMismatchError, IndefiniteKernelError
from gorf.features import (
    GeneralizedRandomFeatures,
    approx_gram,
    approx_kernel,
    batch_estimates,
    build_features,
    build_gorf,
    build_grff,
    build_orf,
    build_rff,
    lift,
    load_model,
    sample_frequencies,
    sample_norm_pairs,
    save_model,
    signature,
)
from gorf.kernels import DeltaGaussian, Gaussian, kernel_eval
from gorf.spectrum import spectrum_for

DG = DeltaGaussian()


def signed_dot(model, a, b):
    return float(np.sum(signature(model) * a * b))


def unit_cols(W):
    return W / np.linalg.norm(W, axis=0)


class TestBuilders:
    def test_gaussian_has_no_negative_block(self):
        m = build_grff(Gaussian(), 8, 0, dim=4)
        assert m.W_neg is None and m.mass_neg == 0.0

    @pytest.mark.parametrize("method", ["grff", "gorf"])
    def test_reproducible(self, method):
        a = build_features(DG, 12, 5, method, dim=6)
        b = build_features(DG, 12, 5, method, dim=6)
        assert np.array_equal(a.W_pos, b.W_pos) and np.array_equal(a.W_neg, b.W_neg)

    def test_rff_equals_grff_for_pd(self):
        a, b = build_rff(Gaussian(), 9, 3, dim=5), build_grff(Gaussian(), 9, 3, dim=5)
        assert np.array_equal(a.W_pos, b.W_pos)

    def test_orf_equals_gorf_for_pd(self):
        a, b = build_orf(Gaussian(), 9, 3, dim=5), build_gorf(Gaussian(), 9, 3, dim=5)
        assert np.array_equal(a.W_pos, b.W_pos)

    @pytest.mark.parametrize("builder", [build_rff, build_orf])
    def test_pd_builders_reject_indefinite(self, builder):
        with pytest.raises(IndefiniteKernelError):
            builder(DG, 4, 0, dim=4)

    def test_grff_norms_pass_ks(self):
        spec = spectrum_for(DG, 4)
        m = build_grff(DG, 10_000, 1, dim=4)
        for W, sign in ((m.W_pos, 1), (m.W_neg, -1)):
            r = np.linalg.norm(W, axis=0)
            assert stats.kstest(r, spec.sampler(sign).cdf_at).pvalue > 1e-3

    @pytest.mark.parametrize("coupling", ["paper", "block"])
    def test_gorf_column_norms_are_sampled_norms(self, coupling):
        spec = spectrum_for(DG, 8)
        W_pos, W_neg = sample_frequencies(spec, 8, "gorf", np.random.default_rng(4), coupling=coupling)
        r_pos, r_neg = sample_norm_pairs(spec, np.random.default_rng(4), 1, 8)
        assert np.max(np.abs(np.linalg.norm(W_pos[0], axis=0) - r_pos[0])) < 1e-12
        assert np.max(np.abs(np.linalg.norm(W_neg[0], axis=0) - r_neg[0])) < 1e-12

    def test_grff_and_gorf_share_norms(self):
        a = build_grff(DG, 16, 9, dim=16)
        b = build_gorf(DG, 16, 9, dim=16)
        assert np.allclose(np.linalg.norm(a.W_pos, axis=0), np.linalg.norm(b.W_pos, axis=0), atol=1e-12)

    def test_gorf_directions_less_aligned_than_iid(self):
        d = s = 16
        g = np.random.default_rng(0)
        gorf, iid = [], []
        for _ in range(40):
            m = build_gorf(DG, s, g, dim=d)
            U = unit_cols(np.hstack([m.W_pos, m.W_neg]))
            gorf.append(np.abs(U.T @ U)[np.triu_indices(2 * s, 1)])
            V = unit_cols(g.standard_normal((d, 2 * s)))
            iid.append(np.abs(V.T @ V)[np.triu_indices(2 * s, 1)])
        gorf, iid = np.concatenate(gorf), np.concatenate(iid)
        assert gorf.size >= 1000
        assert gorf.mean() < iid.mean()

    def test_gorf_direction_marginal_uniform(self):
        # First coordinate of a uniform unit vector: (u + 1) / 2 ~ Beta((d-1)/2, (d-1)/2).
        d = 6
        spec = spectrum_for(DG, d)
        W_pos, W_neg = sample_frequencies(spec, d, "gorf", np.random.default_rng(2), batch=4000)
        for W in (W_pos, W_neg):
            u = W[:, 0, 0] / np.linalg.norm(W[:, :, 0], axis=1)
            marginal = stats.beta((d - 1) / 2, (d - 1) / 2, loc=-1, scale=2)
            assert stats.kstest(u, marginal.cdf).pvalue > 1e-3

    @pytest.mark.parametrize("s", [3, 8])
    def test_orf_columns_orthogonal(self, s):
        W = build_orf(Gaussian(), s, 1, dim=8).W_pos
        G = W.T @ W
        assert np.max(np.abs(G - np.diag(np.diag(G)))) < 1e-10

    def test_block_coupling_columns_orthogonal(self):
        m = build_gorf(DG, 8, 1, dim=8, coupling="block")
        for W in (m.W_pos, m.W_neg):
            G = W.T @ W
            assert np.max(np.abs(G - np.diag(np.diag(G)))) < 1e-10

    def test_gorf_more_features_than_dim(self):
        m = build_gorf(DG, 40, 0, dim=8)
        assert m.W_pos.shape == (8, 40) and m.W_neg.shape == (8, 40)

    @pytest.mark.parametrize("kw", [dict(s=0), dict(s=4, method="nope"), dict(s=4, coupling="x")])
    def test_argument_errors(self, kw):
        kw.setdefault("method", "gorf")
        with pytest.raises(ValueError):
            build_features(DG, kw.pop("s"), 0, dim=4, **kw)

    def test_kernel_dim_conflict(self):
        with pytest.raises(DimensionMismatchError):
            build_grff(Gaussian(dim=3), 4, 0, dim=5)


class TestLift:
    def test_origin(self):
        m = build_gorf(DG, 5, 0, dim=3)
        v = lift(m, np.zeros(3))
        s = 5
        assert np.allclose(v[:s], math.sqrt(m.mass_pos / s))
        assert np.all(v[s:2 * s] == 0)
        assert np.allclose(v[2 * s:3 * s], math.sqrt(m.mass_neg / s))
        assert np.all(v[3 * s:] == 0)

    def test_signed_norm_is_k0(self):
        m = build_grff(DeltaGaussian((2, -1), (1, 10)), 7, 0, dim=4)
        v = lift(m, np.random.default_rng(0).standard_normal(4))
        assert signed_dot(m, v, v) == pytest.approx(1.0, abs=1e-12)

    def test_deterministic_and_shape(self):
        m = build_grff(DG, 7, 0, dim=4)
        x = np.arange(4.0)
        assert np.array_equal(lift(m, x), lift(m, x))
        assert lift(m, np.ones((3, 4))).shape == (3, 28)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            lift(build_grff(DG, 3, 0, dim=4), np.ones(5))


class TestApproxKernel:
    def test_metric_identity(self):
        g = np.random.default_rng(0)
        m = build_gorf(DG, 16, 0, dim=16)
        X, Y = g.random((1000, 16)), g.random((1000, 16))
        LX, LY = lift(m, X), lift(m, Y)
        for i in range(1000):
            assert abs(approx_kernel(m, X[i], Y[i]) - signed_dot(m, LX[i], LY[i])) < 1e-12

    def test_diagonal_is_k0(self):
        m = build_grff(DeltaGaussian((2, -1), (1, 10)), 6, 0, dim=3)
        x = np.array([0.3, -1.0, 2.0])
        assert approx_kernel(m, x, x) == m.mass_pos - m.mass_neg

    def test_gaussian_bounded(self):
        m = build_rff(Gaussian(), 6, 0, dim=3)
        g = np.random.default_rng(1)
        for _ in range(100):
            assert abs(approx_kernel(m, g.normal(size=3), g.normal(size=3))) <= m.mass_pos

    @pytest.mark.parametrize("method", ["grff", "gorf"])
    def test_unbiased(self, method):
        d, s, n = 4, 8, 10_000
        spec = spectrum_for(DG, d)
        x = np.array([0.1, 0.4, -0.2, 0.3])
        y = np.array([-0.2, 0.1, 0.5, 0.0])
        W_pos, W_neg = sample_frequencies(spec, s, method, np.random.default_rng(7), batch=n)
        est = batch_estimates(W_pos, W_neg, spec.mass_pos, spec.mass_neg, x - y)
        se = est.std(ddof=1) / math.sqrt(n)
        assert abs(est.mean() - kernel_eval(DG, x, y)) < 4 * se

    def test_batch_matches_single(self):
        m = build_gorf(DG, 6, 3, dim=5)
        z = np.linspace(-1, 1, 5)
        got = batch_estimates(m.W_pos[None], m.W_neg[None], m.mass_pos, m.mass_neg, z)[0]
        assert got == pytest.approx(approx_kernel(m, z, np.zeros(5)), abs=1e-14)


class TestApproxGram:
    def test_properties(self):
        m = build_gorf(DG, 6, 2, dim=4)
        X = np.random.default_rng(3).random((5, 4))
        K = approx_gram(m, X)
        assert np.array_equal(K, K.T)
        assert np.allclose(np.diag(K), m.mass_pos - m.mass_neg, atol=1e-12)
        for i in range(5):
            for j in range(5):
                assert K[i, j] == pytest.approx(approx_kernel(m, X[i], X[j]), abs=1e-12)

    def test_rectangular(self):
        m = build_grff(DG, 6, 2, dim=4)
        assert approx_gram(m, np.ones((2, 4)), np.zeros((3, 4))).shape == (2, 3)


class TestSerialization:
    @pytest.mark.parametrize("kernel", [DG, Gaussian(0.5)])
    def test_round_trip(self, kernel, tmp_path):
        m = build_gorf(kernel, 5, 11, dim=3)
        save_model(m, tmp_path / "m.npz")
        back = load_model(tmp_path / "m.npz")
        assert np.array_equal(back.W_pos, m.W_pos)
        assert (back.W_neg is None) == (m.W_neg is None)
        assert back.kernel == m.kernel and back.seed == 11
        assert (back.mass_pos, back.mass_neg, back.method) == (m.mass_pos, m.mass_neg, "gorf")
        X = np.random.default_rng(0).random((4, 3))
        assert np.array_equal(lift(back, X), lift(m, X))


class TestEstimator:
    def test_fit_transform(self):
        X = np.random.default_rng(0).random((20, 4))
        est = GeneralizedRandomFeatures("delta-gaussian:coefs=1,-1;sigmas=1,10", n_components=6,
                                        random_state=0)
        F = est.fit_transform(X)
        assert F.shape == (20, 24)
        assert np.array_equal(est.signature_, signature(est.model_))
        K = est.approx_gram(X)
        assert np.allclose(K, (F * est.signature_) @ F.T)

    def test_default_components_is_dim(self):
        est = GeneralizedRandomFeatures(Gaussian(), random_state=1).fit(np.zeros((3, 5)))
        assert est.model_.s == 5

    def test_clone_and_pipeline(self):
        est = GeneralizedRandomFeatures(DG, n_components=3, method="grff", random_state=4)
        assert clone(est).get_params() == est.get_params()
        X = np.random.default_rng(0).random((10, 3))
        out = make_pipeline(MinMaxScaler(), est).fit_transform(X)
        assert out.shape == (10, 12)

    def test_unfitted(self):
        from sklearn.exceptions import NotFittedError
        with pytest.raises(NotFittedError):
            GeneralizedRandomFeatures().transform(np.zeros((1, 2)))

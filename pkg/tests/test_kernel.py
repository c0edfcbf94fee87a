"""Kernel evaluation, bandwidth selection and centering vs. explicit oracles."""

import numpy as np
import pytest

import condinv as ci
from condinv.kernel import (
    CenteringStats,
    KernelError,
    center_cross_from_stats,
)
import oracles


class TestKernelSpec:
    def test_defaults(self):
        spec = ci.KernelSpec()
        assert spec.family == "rbf"
        assert not spec.resolved

    def test_rejects_unknown_family(self):
        with pytest.raises(KernelError, match="family"):
            ci.KernelSpec(family="poly")

    def test_rejects_bad_bandwidth(self):
        with pytest.raises(KernelError):
            ci.KernelSpec(bandwidth=0.0)
        with pytest.raises(KernelError):
            ci.KernelSpec(bandwidth=-1.0)
        with pytest.raises(KernelError):
            ci.KernelSpec(bandwidth="huge")

    def test_resolved_flag(self):
        assert ci.KernelSpec(bandwidth=2.0).resolved
        assert not ci.KernelSpec(bandwidth="median").resolved


class TestGram:
    def test_rbf_matches_elementwise(self, rng):
        a = rng.normal(size=(7, 3))
        b = rng.normal(size=(5, 3))
        K = ci.gram(a, b, ci.KernelSpec(bandwidth=1.3))
        assert np.allclose(K, oracles.rbf_elementwise(a, b, 1.3), atol=1e-14)

    def test_rbf_diagonal_is_one(self, rng):
        a = rng.normal(size=(6, 2))
        K = ci.gram(a, a, ci.KernelSpec(bandwidth=0.7))
        assert np.allclose(np.diag(K), 1.0)
        assert np.allclose(K, K.T)
        assert K.max() <= 1.0 + 1e-15

    def test_linear_is_inner_product(self, rng):
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=(6, 3))
        K = ci.gram(a, b, ci.KernelSpec(family="linear", bandwidth=1.0))
        assert np.allclose(K, a @ b.T)

    def test_unresolved_bandwidth_rejected(self, rng):
        a = rng.normal(size=(4, 2))
        with pytest.raises(KernelError, match="unresolved"):
            ci.gram(a, a, ci.KernelSpec())

    def test_dimension_mismatch(self, rng):
        with pytest.raises(KernelError, match="dimensions"):
            ci.gram(rng.normal(size=(3, 2)), rng.normal(size=(3, 4)), ci.KernelSpec(bandwidth=1.0))


class TestMedianBandwidth:
    def test_matches_exhaustive_oracle(self, rng):
        x = rng.normal(size=(25, 4))
        assert ci.median_bandwidth(x) == pytest.approx(oracles.median_pairwise(x), rel=1e-12)

    def test_subsample_is_deterministic(self, rng):
        x = rng.normal(size=(1500, 3))
        a = ci.median_bandwidth(x, max_points=200)
        b = ci.median_bandwidth(x, max_points=200)
        assert a == b

    def test_identical_points_rejected(self):
        x = np.ones((5, 2))
        with pytest.raises(KernelError, match="identical"):
            ci.median_bandwidth(x)

    def test_needs_two_samples(self):
        with pytest.raises(KernelError, match="2 samples"):
            ci.median_bandwidth(np.ones((1, 3)))

    def test_resolve_bandwidth(self, rng):
        x = rng.normal(size=(10, 2))
        spec = ci.resolve_bandwidth(ci.KernelSpec(), x)
        assert spec.resolved
        assert spec.bandwidth == pytest.approx(oracles.median_pairwise(x), rel=1e-12)
        fixed = ci.KernelSpec(bandwidth=3.0)
        assert ci.resolve_bandwidth(fixed, x) is fixed


class TestCenterTrain:
    def test_matches_materialized_oracle(self, rng):
        x = rng.normal(size=(9, 3))
        K = ci.gram(x, x, ci.KernelSpec(bandwidth=1.1))
        assert np.allclose(ci.center_train(K), oracles.center_square(K), atol=1e-12)

    def test_rows_and_columns_sum_to_zero(self, rng):
        x = rng.normal(size=(12, 2))
        Kc = ci.center_train(ci.gram(x, x, ci.KernelSpec(bandwidth=0.9)))
        assert np.abs(Kc.sum(axis=0)).max() < 1e-10
        assert np.abs(Kc.sum(axis=1)).max() < 1e-10

    def test_idempotent(self, rng):
        x = rng.normal(size=(8, 2))
        Kc = ci.center_train(ci.gram(x, x, ci.KernelSpec(bandwidth=1.0)))
        assert np.allclose(ci.center_train(Kc), Kc, atol=1e-12)

    def test_constant_kernel_centers_to_zero(self):
        assert np.allclose(ci.center_train(np.ones((6, 6))), 0.0, atol=1e-14)

    def test_preserves_symmetry(self, rng):
        x = rng.normal(size=(10, 3))
        Kc = ci.center_train(ci.gram(x, x, ci.KernelSpec(bandwidth=1.0)))
        assert np.array_equal(Kc, Kc.T) or np.allclose(Kc, Kc.T, atol=1e-15)

    def test_rejects_non_square(self):
        with pytest.raises(KernelError, match="square"):
            ci.center_train(np.ones((3, 4)))


class TestCenterCross:
    def test_paper_mode_matches_oracle(self, rng):
        x = rng.normal(size=(8, 3))
        z = rng.normal(size=(5, 3))
        spec = ci.KernelSpec(bandwidth=1.2)
        K = ci.gram(x, x, spec)
        Kt = ci.gram(x, z, spec)
        got = ci.center_cross(Kt, K, mode="paper")
        assert np.allclose(got, oracles.center_cross_paper(Kt, 8), atol=1e-12)

    def test_standard_mode_matches_oracle(self, rng):
        x = rng.normal(size=(8, 3))
        z = rng.normal(size=(5, 3))
        spec = ci.KernelSpec(bandwidth=1.2)
        K = ci.gram(x, x, spec)
        Kt = ci.gram(x, z, spec)
        got = ci.center_cross(Kt, K, mode="standard")
        assert np.allclose(got, oracles.center_cross_standard(Kt, K), atol=1e-12)

    def test_paper_mode_on_train_equals_center_train(self, rng):
        # self-consistency: the same matrix through either path, bitwise
        x = rng.normal(size=(10, 2))
        K = ci.gram(x, x, ci.KernelSpec(bandwidth=1.0))
        assert np.array_equal(ci.center_cross(K, K, mode="paper"), ci.center_train(K))

    def test_standard_mode_matches_feature_map_centering(self, rng):
        # linear kernel: centering the features first must equal centering
        # the cross kernel in standard mode
        x = rng.normal(size=(9, 4))
        z = rng.normal(size=(6, 4))
        spec = ci.KernelSpec(family="linear", bandwidth=1.0)
        K = ci.gram(x, x, spec)
        Kt = ci.gram(x, z, spec)
        xc = x - x.mean(axis=0)
        zc = z - x.mean(axis=0)
        assert np.allclose(ci.center_cross(Kt, K, mode="standard"), xc @ zc.T, atol=1e-12)

    def test_from_stats_equals_direct(self, rng):
        x = rng.normal(size=(7, 3))
        z = rng.normal(size=(4, 3))
        spec = ci.KernelSpec(bandwidth=0.8)
        K = ci.gram(x, x, spec)
        Kt = ci.gram(x, z, spec)
        stats = CenteringStats.from_train(K)
        for mode in ("paper", "standard"):
            assert np.array_equal(
                center_cross_from_stats(Kt, stats, mode), ci.center_cross(Kt, K, mode)
            )

    def test_shape_checks(self, rng):
        stats = CenteringStats.from_train(np.eye(5))
        with pytest.raises(KernelError, match="rows"):
            center_cross_from_stats(np.ones((4, 3)), stats)
        with pytest.raises(KernelError, match="mode"):
            center_cross_from_stats(np.ones((5, 3)), stats, mode="other")

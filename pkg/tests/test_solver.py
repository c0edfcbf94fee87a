"""Generalized eigensolver, projection and model serialization."""

import numpy as np
import pytest

import condinv as ci
from condinv.kernel import CenteringStats
from condinv.scatter import ScatterSet
from condinv.solver import SolverError, projection_basis
import oracles
from conftest import random_dataset


def fit_scatters(data):
    spec = ci.KernelSpec(family="linear", bandwidth=1.0)
    K = ci.gram(data.features, data.features, spec)
    Kc = ci.center_train(K)
    w = ci.build_weights(ci.group_index(data))
    return ci.scatter_set(Kc, w), K, spec


def diagonal_scatters(p_diag, n):
    z = np.zeros((n, n))
    return ScatterSet(
        conditional=z, prior=z, between=np.diag(np.asarray(p_diag, float)), within=np.eye(n)
    )


class TestSolverConfig:
    def test_defaults(self):
        cfg = ci.SolverConfig()
        assert cfg.gamma == 1.0 and cfg.alpha == 1.0
        assert cfg.q is None

    def test_validation(self):
        with pytest.raises(SolverError):
            ci.SolverConfig(gamma=-0.1)
        with pytest.raises(SolverError):
            ci.SolverConfig(alpha=-1.0)
        with pytest.raises(SolverError):
            ci.SolverConfig(epsilon=0.0)
        with pytest.raises(SolverError):
            ci.SolverConfig(q=0)
        with pytest.raises(SolverError):
            ci.SolverConfig(eig_tolerance=0.0)

    def test_default_q(self):
        assert ci.default_q(100, 3, 2) == 6
        assert ci.default_q(5, 3, 4) == 4


class TestSolveDiagonal:
    def test_hand_computed_eigenpairs(self):
        # P = diag(4, 1, 0), D = I + eps*I: eigenvalues 4/(1+eps), 1/(1+eps)
        eps = 1e-3
        model = ci.solve(diagonal_scatters([4.0, 1.0, 0.0], 3), ci.SolverConfig(q=2, epsilon=eps))
        want = np.array([4.0, 1.0]) / (1.0 + eps)
        assert np.allclose(model.eigenvalues, want, rtol=1e-12)
        # eigenvectors are scaled basis vectors with B' D B = I
        scale = 1.0 / np.sqrt(1.0 + eps)
        assert np.allclose(np.abs(model.coefficients), np.eye(3)[:, :2] * scale, atol=1e-12)
        assert model.effective_epsilon == pytest.approx(eps)  # mean diag within = 1

    def test_truncation_warns(self):
        model = ci.solve(diagonal_scatters([4.0, 1.0, 0.0], 3), ci.SolverConfig(q=3))
        assert model.n_components == 2
        assert any("truncated" in w for w in model.warnings)

    def test_zero_numerator_is_error(self):
        with pytest.raises(SolverError, match="positive"):
            ci.solve(diagonal_scatters([0.0, 0.0, 0.0], 3), ci.SolverConfig(q=1))

    def test_q_exceeding_n(self):
        with pytest.raises(SolverError, match="exceeds"):
            ci.solve(diagonal_scatters([1.0, 1.0], 2), ci.SolverConfig(q=3))

    def test_q_required(self):
        with pytest.raises(SolverError, match="unset"):
            ci.solve(diagonal_scatters([1.0, 1.0], 2), ci.SolverConfig())

    def test_relative_epsilon_scales_with_within(self):
        # doubling the within scatter doubles the ridge actually applied
        a = ci.solve(diagonal_scatters([4.0, 1.0], 2), ci.SolverConfig(q=1, epsilon=1e-4))
        z = np.zeros((2, 2))
        doubled = ScatterSet(
            conditional=z, prior=z, between=np.diag([4.0, 1.0]), within=2.0 * np.eye(2)
        )
        b = ci.solve(doubled, ci.SolverConfig(q=1, epsilon=1e-4))
        assert b.effective_epsilon == pytest.approx(2.0 * a.effective_epsilon)

    def test_zero_within_falls_back_to_absolute(self):
        z = np.zeros((2, 2))
        scatters = ScatterSet(conditional=z, prior=z, between=np.diag([1.0, 0.5]), within=z)
        model = ci.solve(scatters, ci.SolverConfig(q=1, epsilon=1e-3))
        assert model.effective_epsilon == pytest.approx(1e-3)


class TestSolveRandom:
    def instances(self):
        out = []
        for trial in range(10):
            rng = np.random.default_rng(500 + trial)
            data = random_dataset(
                rng,
                n_domains=int(rng.integers(2, 4)),
                n_classes=int(rng.integers(2, 4)),
                n=int(rng.integers(12, 22)),
                d=int(rng.integers(2, 5)),
            )
            out.append(data)
        return out

    def test_constraint_and_residual(self):
        for data in self.instances():
            scatters, _, _ = fit_scatters(data)
            cfg = ci.SolverConfig(gamma=0.7, alpha=1.3, epsilon=1e-5, q=4)
            model = ci.solve(scatters, cfg)
            B, lam = model.coefficients, model.eigenvalues
            D = (
                cfg.gamma * scatters.conditional
                + cfg.alpha * scatters.prior
                + scatters.within
                + model.effective_epsilon * np.eye(data.n)
            )
            assert np.allclose(B.T @ D @ B, np.eye(model.n_components), atol=1e-6)
            res = scatters.between @ B - D @ B * lam[None, :]
            norms = np.linalg.norm(scatters.between @ B, axis=0)
            assert np.all(np.linalg.norm(res, axis=0) <= 1e-6 * np.maximum(norms, 1e-12))

    def test_eigenvalues_descend_and_are_positive(self):
        for data in self.instances():
            scatters, _, _ = fit_scatters(data)
            model = ci.solve(scatters, ci.SolverConfig(q=5))
            assert np.all(model.eigenvalues > 0)
            assert np.all(np.diff(model.eigenvalues) <= 0)

    def test_positive_spectrum_matches_explicit_oracle(self):
        # the n-dim coefficient pencil and the d-dim feature pencil share
        # their positive spectrum when the kernel is linear
        for data in self.instances()[:5]:
            scatters, _, _ = fit_scatters(data)
            cfg = ci.SolverConfig(gamma=0.5, alpha=2.0, epsilon=1e-6, q=data.n)
            model = ci.solve(scatters, cfg)
            want = oracles.pencil_eigenvalues_explicit(
                data.features, data.labels, data.domains, 0.5, 2.0, model.effective_epsilon
            )
            got = model.eigenvalues
            take = min(len(want), len(got))
            assert take >= 1
            assert np.allclose(got[:take], want[:take], rtol=1e-6)

    def test_prefix_property(self):
        # solving at a large q and slicing equals solving at the small q
        for data in self.instances()[:4]:
            scatters, _, _ = fit_scatters(data)
            big = ci.solve(scatters, ci.SolverConfig(q=6))
            small = ci.solve(scatters, ci.SolverConfig(q=2))
            take = min(2, big.n_components, small.n_components)
            assert np.array_equal(small.coefficients[:, :take], big.coefficients[:, :take])
            assert np.array_equal(small.eigenvalues[:take], big.eigenvalues[:take])

    def test_sign_canonicalization(self):
        for data in self.instances()[:4]:
            scatters, _, _ = fit_scatters(data)
            model = ci.solve(scatters, ci.SolverConfig(q=3))
            B = model.coefficients
            picks = B[np.argmax(np.abs(B), axis=0), np.arange(B.shape[1])]
            assert np.all(picks > 0)


class TestProjectionModel:
    def test_validation(self):
        with pytest.raises(SolverError):
            ci.ProjectionModel(
                coefficients=np.ones((3, 2)),
                eigenvalues=np.ones(3),
                gamma=1.0, alpha=1.0, effective_epsilon=1e-5, requested_q=2,
            )
        with pytest.raises(SolverError, match="no components"):
            ci.ProjectionModel(
                coefficients=np.ones((3, 0)),
                eigenvalues=np.ones(0),
                gamma=1.0, alpha=1.0, effective_epsilon=1e-5, requested_q=1,
            )
        with pytest.raises(SolverError, match="positive and non-increasing"):
            ci.ProjectionModel(
                coefficients=np.ones((3, 2)),
                eigenvalues=np.array([1.0, 2.0]),
                gamma=1.0, alpha=1.0, effective_epsilon=1e-5, requested_q=2,
            )

    def test_projection_basis_scaling(self):
        model = ci.solve(diagonal_scatters([4.0, 1.0, 0.0], 3), ci.SolverConfig(q=2))
        basis = projection_basis(model)
        assert np.allclose(basis, model.coefficients / np.sqrt(model.eigenvalues)[None, :])


class TestProject:
    def fitted(self, rng, mode_data=None):
        data = mode_data or random_dataset(rng, n=16, d=3, domain_shift=0.5)
        method = ci.Method("cidg", q=4)
        spec = ci.KernelSpec(bandwidth=1.5)
        return data, ci.fit_baseline(method, data, spec)

    def test_train_projection_matches_direct_formula(self, rng):
        data, model = self.fitted(rng)
        K = ci.gram(data.features, data.features, model.kernel_spec)
        Kc = ci.center_train(K)
        want = Kc.T @ projection_basis(model)
        got = ci.project(model, data.features, mode="paper")
        assert np.allclose(got, want, atol=1e-10)

    def test_modes_differ_on_new_points(self, rng):
        data, model = self.fitted(rng)
        z = rng.normal(size=(5, 3)) + 2.0
        paper = ci.project(model, z, mode="paper")
        standard = ci.project(model, z, mode="standard")
        assert paper.shape == standard.shape == (5, model.n_components)
        assert not np.allclose(paper, standard)

    def test_requires_kernel_context(self):
        model = ci.solve(diagonal_scatters([4.0, 1.0, 0.0], 3), ci.SolverConfig(q=1))
        with pytest.raises(SolverError, match="context"):
            ci.project(model, np.ones((2, 3)))

    def test_rejects_wrong_width_and_nonfinite(self, rng):
        data, model = self.fitted(rng)
        with pytest.raises(SolverError, match="columns"):
            ci.project(model, np.ones((2, 7)))
        bad = np.ones((2, 3))
        bad[0, 0] = np.inf
        with pytest.raises(SolverError, match="non-finite"):
            ci.project(model, bad)


class TestModelSerialization:
    def test_round_trip_is_exact(self, rng, tmp_path):
        data = random_dataset(rng, n=15, d=3)
        model = ci.fit_baseline(ci.Method("cidg", q=3), data, ci.KernelSpec(bandwidth=1.2))
        path = tmp_path / "m.model"
        ci.save_model(model, path)
        back = ci.load_model(path)
        assert np.array_equal(back.coefficients, model.coefficients)
        assert np.array_equal(back.eigenvalues, model.eigenvalues)
        assert np.array_equal(back.training_features, model.training_features)
        assert back.kernel_spec == model.kernel_spec
        assert back.gamma == model.gamma and back.alpha == model.alpha
        assert back.effective_epsilon == model.effective_epsilon
        assert back.requested_q == model.requested_q
        assert back.warnings == model.warnings
        assert back.centering.n == model.centering.n
        assert np.array_equal(back.centering.row_means, model.centering.row_means)
        assert back.centering.grand_mean == model.centering.grand_mean

    def test_round_trip_preserves_projections(self, rng, tmp_path):
        data = random_dataset(rng, n=15, d=3)
        model = ci.fit_baseline(ci.Method("kfda", q=2), data, ci.KernelSpec(bandwidth=0.9))
        path = tmp_path / "m.model"
        ci.save_model(model, path)
        back = ci.load_model(path)
        z = rng.normal(size=(6, 3))
        for mode in ("paper", "standard"):
            assert np.array_equal(
                ci.project(model, z, mode=mode), ci.project(back, z, mode=mode)
            )

    def test_round_trip_keeps_warnings(self, rng, tmp_path):
        data = random_dataset(rng, n=12, d=2)
        # q above the positive-eigenvalue count forces a truncation warning
        model = ci.fit_baseline(ci.Method("cidg", q=11), data, ci.KernelSpec(bandwidth=1.0))
        assert model.warnings
        path = tmp_path / "m.model"
        ci.save_model(model, path)
        assert ci.load_model(path).warnings == model.warnings

    def test_context_free_model_cannot_save(self, tmp_path):
        model = ci.solve(diagonal_scatters([2.0, 1.0], 2), ci.SolverConfig(q=1))
        with pytest.raises(SolverError, match="context"):
            ci.save_model(model, tmp_path / "m.model")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.model"
        path.write_bytes(b"NOTAMODL" + b"\0" * 64)
        with pytest.raises(SolverError, match="magic"):
            ci.load_model(path)

    def test_truncated_file(self, rng, tmp_path):
        data = random_dataset(rng, n=12, d=2)
        model = ci.fit_baseline(ci.Method("kpca", q=2), data, ci.KernelSpec(bandwidth=1.0))
        path = tmp_path / "m.model"
        ci.save_model(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(SolverError, match="truncated|corrupt"):
            ci.load_model(path)

    def test_trailing_bytes(self, rng, tmp_path):
        data = random_dataset(rng, n=12, d=2)
        model = ci.fit_baseline(ci.Method("kpca", q=2), data, ci.KernelSpec(bandwidth=1.0))
        path = tmp_path / "m.model"
        ci.save_model(model, path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(SolverError, match="trailing"):
            ci.load_model(path)

    def test_unsupported_version(self, rng, tmp_path):
        data = random_dataset(rng, n=12, d=2)
        model = ci.fit_baseline(ci.Method("kpca", q=2), data, ci.KernelSpec(bandwidth=1.0))
        path = tmp_path / "m.model"
        ci.save_model(model, path)
        blob = bytearray(path.read_bytes())
        blob[8:12] = (99).to_bytes(4, "little")  # version field follows the magic
        path.write_bytes(bytes(blob))
        with pytest.raises(SolverError, match="version"):
            ci.load_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(SolverError, match="not found"):
            ci.load_model(tmp_path / "absent.model")

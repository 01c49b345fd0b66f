import unittest

import numpy as np
from numpy.testing import assert_allclose

from koopman_ctl import exceptions
from koopman_ctl.hdmd import LiftedModel, fit, least_squares_residual, spectrum
from koopman_ctl.observables import LiftedSnapshotSet, ObservableDictionary, delay_lift
from koopman_ctl.surrogate.plant import Trajectory


def linear_snapshots(A, B, count, seed=0) -> LiftedSnapshotSet:
    """Snapshot pairs of z+ = A z + B u under random states and inputs."""
    rng = np.random.default_rng(seed)
    m, p = B.shape
    X = rng.normal(size=(m, count))
    U = rng.normal(size=(p, count))
    return LiftedSnapshotSet(X=X, X_plus=A @ X + B @ U, U=U, dictionary=ObservableDictionary('delay', 0, m),
                             sample_dt=0.02, times=np.arange(count))


def diagonal_model(diagonal) -> LiftedModel:
    m = len(diagonal)
    return LiftedModel(A=np.diag(diagonal), B=np.zeros((m, 1)), C=np.eye(m),
                       dictionary=ObservableDictionary('delay', 0, m), sample_dt=0.02, training_snapshots=0)


class TestFit(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(1)
        self.A = rng.normal(size=(6, 6)) / 3
        self.B = rng.normal(size=(6, 2))

    def test_recovers_a_linear_system(self):
        model = fit(linear_snapshots(self.A, self.B, 40))

        self.assertLess(np.linalg.norm(model.A - self.A), 1e-8)
        self.assertLess(np.linalg.norm(model.B - self.B), 1e-8)
        assert_allclose(model.C, np.eye(6))
        self.assertEqual(model.training_snapshots, 40)

    def test_recovers_a_linear_system_from_a_trajectory(self):
        rng = np.random.default_rng(11)
        A = rng.normal(size=(6, 6))
        A *= 0.9 / np.max(np.abs(np.linalg.eigvals(A)))
        B = rng.normal(size=(6, 2))
        u = rng.uniform(-1, 1, size=(500, 2))
        states = [rng.normal(size=6)]
        for u_k in u:
            states.append(A @ states[-1] + B @ u_k)
        data = delay_lift(Trajectory(sample_dt=0.02, states=np.array(states), inputs=u), 0)

        model = fit(data)

        self.assertEqual(data.snapshot_count, 500)
        self.assertLess(np.linalg.norm(model.A - A), 1e-8)
        self.assertLess(np.linalg.norm(model.B - B), 1e-8)

    def test_residual_is_orthogonal_to_the_regressors(self):
        data = linear_snapshots(self.A, self.B, 60)
        noisy = LiftedSnapshotSet(X=data.X, X_plus=data.X_plus + 0.1 * np.random.default_rng(5).normal(size=(6, 60)),
                                  U=data.U, dictionary=data.dictionary, sample_dt=0.02, times=data.times)
        model = fit(noisy)
        residual = noisy.X_plus - model.A @ noisy.X - model.B @ noisy.U
        regressors = np.vstack([noisy.X, noisy.U])

        scale = np.linalg.norm(residual) * np.linalg.norm(regressors)
        assert_allclose(residual @ regressors.T / scale, 0.0, atol=1e-10)

    def test_without_inputs(self):
        data = linear_snapshots(self.A, np.zeros((6, 0)), 30)
        model = fit(data)

        self.assertEqual(model.B.shape, (6, 0))
        assert_allclose(model.A, data.X_plus @ np.linalg.pinv(data.X), atol=1e-10)

    def test_least_squares_optimality(self):
        data = linear_snapshots(self.A, self.B, 40)
        noisy = LiftedSnapshotSet(X=data.X, X_plus=data.X_plus + 0.1 * np.random.default_rng(2).normal(size=(6, 40)),
                                  U=data.U, dictionary=data.dictionary, sample_dt=0.02, times=data.times)
        model = fit(noisy)
        best = least_squares_residual(model, noisy)
        rng = np.random.default_rng(3)

        for _ in range(10):
            perturbed = LiftedModel(A=model.A + 1e-3 * rng.normal(size=(6, 6)), B=model.B, C=model.C,
                                    dictionary=model.dictionary, sample_dt=0.02, training_snapshots=40)
            self.assertLessEqual(best, least_squares_residual(perturbed, noisy))

    def test_deterministic(self):
        data = linear_snapshots(self.A, self.B, 40)
        self.assertEqual(fit(data).fingerprint, fit(data).fingerprint)

    def test_rollout_of_the_exact_model(self):
        model = fit(linear_snapshots(self.A, self.B, 40))
        z0 = np.ones(6)
        u = np.random.default_rng(4).normal(size=(5, 2))
        expected, z = [z0], z0
        for u_k in u:
            z = self.A @ z + self.B @ u_k
            expected.append(z)

        assert_allclose(model.rollout(z0, u), np.array(expected), atol=1e-8)


class TestFixedPointFit(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(7)
        self.z_star = rng.normal(size=6)
        e = self.z_star / np.linalg.norm(self.z_star)
        self.A = (rng.normal(size=(6, 6)) / 3) @ (np.eye(6) - np.outer(e, e)) + np.outer(e, e)
        self.B = rng.normal(size=(6, 2))

    def test_recovers_a_system_with_that_fixed_point(self):
        model = fit(linear_snapshots(self.A, self.B, 40), fixed_point=self.z_star)

        self.assertLess(np.linalg.norm(model.A - self.A), 1e-8)
        self.assertLess(np.linalg.norm(model.B - self.B), 1e-8)

    def test_zero_input_keeps_the_fixed_point(self):
        rng = np.random.default_rng(8)
        data = linear_snapshots(rng.normal(size=(6, 6)) / 3, self.B, 40)
        model = fit(data, fixed_point=self.z_star)

        assert_allclose(model.A @ self.z_star, self.z_star, atol=1e-12)
        assert_allclose(model.rollout(self.z_star, np.zeros((50, 2))), np.tile(self.z_star, (51, 1)), atol=1e-9)

    def test_constrained_fit_costs_at_least_the_free_fit(self):
        rng = np.random.default_rng(9)
        data = linear_snapshots(rng.normal(size=(6, 6)) / 3, self.B, 40)

        free = least_squares_residual(fit(data), data)
        constrained = least_squares_residual(fit(data, fixed_point=self.z_star), data)

        self.assertGreaterEqual(constrained, free - 1e-12)

    def test_rejects_a_zero_fixed_point(self):
        with self.assertRaises(exceptions.InvalidSpec):
            fit(linear_snapshots(self.A, self.B, 40), fixed_point=np.zeros(6))


class TestSpectrum(unittest.TestCase):
    def test_mode_powers_of_an_orthogonal_basis(self):
        model = diagonal_model([0.9, 0.1])
        training = LiftedSnapshotSet(X=np.tile([[1.0], [0.0]], 5), X_plus=np.zeros((2, 5)), U=np.zeros((1, 5)),
                                     dictionary=model.dictionary, sample_dt=0.02, times=np.arange(5))
        spec = spectrum(model, training)

        assert_allclose(spec.eigenvalues, [0.9, 0.1])
        assert_allclose(spec.mode_powers, [1.0, 0.0])
        self.assertAlmostEqual(spec.cumulative_power([0]), 1.0)

    def test_sorted_by_power(self):
        model = diagonal_model([0.2, 0.5, 0.9])
        X = np.tile([[1.0], [3.0], [2.0]], 4)
        training = LiftedSnapshotSet(X=X, X_plus=X, U=np.zeros((1, 4)), dictionary=model.dictionary,
                                     sample_dt=0.02, times=np.arange(4))
        spec = spectrum(model, training)

        assert_allclose(spec.eigenvalues, [0.5, 0.9, 0.2])
        assert_allclose(spec.permutation, [1, 2, 0])
        assert_allclose(spec.eigenfunctions(X)[:, 0], [3.0, 2.0, 1.0])

    def test_conjugate_pairs_share_their_power(self):
        rng = np.random.default_rng(6)
        data = linear_snapshots(rng.normal(size=(8, 8)) / 3, rng.normal(size=(8, 1)), 60)
        spec = spectrum(fit(data), data)

        for i, j in enumerate(spec.partner):
            self.assertAlmostEqual(spec.mode_powers[i], spec.mode_powers[j], places=12)
            assert_allclose(spec.eigenvalues[j], np.conj(spec.eigenvalues[i]))
        self.assertTrue(np.all(np.diff(spec.mode_powers) <= 1e-12))

    def test_modes_and_adjoints_rebuild_the_matrix(self):
        rng = np.random.default_rng(10)
        data = linear_snapshots(rng.normal(size=(8, 8)) / 3, rng.normal(size=(8, 2)), 60)
        model = fit(data)
        spec = spectrum(model, data)

        rebuilt = spec.modes @ np.diag(spec.eigenvalues) @ spec.adjoint_modes.conj().T
        assert_allclose(rebuilt, model.A, atol=1e-10)
        assert_allclose(spec.adjoint_modes.conj().T @ spec.modes, np.eye(8), atol=1e-10)

    def test_continuous_eigenvalues(self):
        model = diagonal_model([np.exp(-0.02)])
        training = LiftedSnapshotSet(X=np.ones((1, 2)), X_plus=np.ones((1, 2)), U=np.zeros((1, 2)),
                                     dictionary=model.dictionary, sample_dt=0.02, times=np.arange(2))

        assert_allclose(spectrum(model, training).continuous_eigenvalues(0.02), [-1.0])

    def test_needs_training_snapshots(self):
        model = diagonal_model([0.5])
        empty = LiftedSnapshotSet(X=np.zeros((1, 0)), X_plus=np.zeros((1, 0)), U=np.zeros((1, 0)),
                                  dictionary=model.dictionary, sample_dt=0.02, times=np.arange(0))

        with self.assertRaises(exceptions.InsufficientData):
            spectrum(model, empty)


if __name__ == '__main__':
    unittest.main()

import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from koopman_ctl import exceptions
from koopman_ctl.surrogate.signals import SignalSpec, constant_signal, exhaust_of, gaussian_signal, generate, step_signal


class TestGaussianSignal(unittest.TestCase):
    def setUp(self):
        self.spec = SignalSpec('gaussian_mixture', duration=120.0, seed=17)

    def test_shape(self):
        self.assertEqual(gaussian_signal(self.spec).shape, (6000, 3))

    def test_within_bounds_and_reaches_them(self):
        u = gaussian_signal(self.spec)

        self.assertTrue(np.all(u >= 0.3) and np.all(u <= 0.85))
        assert_array_equal(u.min(axis=0), [0.3] * 3)
        assert_array_equal(u.max(axis=0), [0.85] * 3)

    def test_seed_determinism(self):
        same = gaussian_signal(SignalSpec('gaussian_mixture', duration=120.0, seed=17))
        other = gaussian_signal(SignalSpec('gaussian_mixture', duration=120.0, seed=18))

        assert_array_equal(gaussian_signal(self.spec), same)
        self.assertGreater(np.abs(gaussian_signal(self.spec) - other).max(), 0.0)

    def test_continuity(self):
        u = gaussian_signal(SignalSpec('gaussian_mixture', duration=540.0, seed=1))

        self.assertLess(np.abs(np.diff(u, axis=0)).max(), (0.85 - 0.3) / 4)

    def test_no_gaussians_gives_the_midpoint(self):
        u = gaussian_signal(SignalSpec('gaussian_mixture', duration=10.0, n_gaussians=0))

        assert_allclose(u, (0.3 + 0.85) / 2)

    def test_rejects_other_kinds(self):
        with self.assertRaises(exceptions.InvalidSpec):
            gaussian_signal(SignalSpec('random_steps', duration=10.0))


class TestStepSignal(unittest.TestCase):
    def test_within_bounds(self):
        u = step_signal(SignalSpec('random_steps', duration=120.0, seed=3))

        self.assertTrue(np.all(u >= 0.3) and np.all(u <= 0.85))

    def test_hold_of_the_whole_duration(self):
        u = step_signal(SignalSpec('random_steps', duration=20.0, hold_range=(20.0, 20.0), seed=3))

        for channel in range(3):
            self.assertEqual(len(np.unique(u[:, channel])), 1)

    def test_level_count(self):
        u = step_signal(SignalSpec('random_steps', duration=540.0, seed=8))
        expected = 540.0 / np.mean((1.0, 4.0))

        for channel in range(3):
            levels = 1 + np.count_nonzero(np.diff(u[:, channel]))
            self.assertGreater(levels, 0.5 * expected)
            self.assertLess(levels, 1.5 * expected)

    def test_invalid_hold_range(self):
        with self.assertRaises(exceptions.InvalidSpec):
            step_signal(SignalSpec('random_steps', duration=10.0, hold_range=(2.0, 1.0)))


class TestSignalSpec(unittest.TestCase):
    def test_rejects_inverted_bounds(self):
        with self.assertRaises(exceptions.InvalidSpec):
            SignalSpec('gaussian_mixture', duration=10.0, bounds=(0.85, 0.3))

    def test_rejects_unknown_kind(self):
        with self.assertRaises(exceptions.InvalidSpec):
            SignalSpec('chirp', duration=10.0)

    def test_constant(self):
        assert_allclose(constant_signal(SignalSpec('constant', duration=1.0)), 0.575)
        assert_allclose(generate(SignalSpec('constant', duration=1.0, level=0.4)), 0.4)


class TestExhaust(unittest.TestCase):
    def test_values(self):
        assert_allclose(exhaust_of([0.3, 1.0]), [0.7, 0.0])

    def test_involution(self):
        u = np.random.default_rng(0).uniform(size=(10, 3))
        assert_allclose(exhaust_of(exhaust_of(u)), u, atol=1e-15)


if __name__ == '__main__':
    unittest.main()

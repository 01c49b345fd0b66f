import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from koopman_ctl import exceptions
from koopman_ctl.surrogate.plant import (PlantConfig, PlantState, Trajectory, energy, force_model, observe, rest_state,
                                         settle, simulate, step)


class TestPlantConfig(unittest.TestCase):
    def test_defaults(self):
        cfg = PlantConfig()

        self.assertEqual(cfg.state_dim, 45)
        self.assertEqual(cfg.substeps, 10)
        self.assertAlmostEqual(cfg.masses[-1], 0.0408)

    def test_sample_dt_must_be_a_multiple(self):
        with self.assertRaises(exceptions.InvalidSpec):
            PlantConfig(sample_dt=0.005, integrator_dt=0.002)

    def test_rejects_single_node(self):
        with self.assertRaises(exceptions.InvalidSpec):
            PlantConfig(node_count=1)

    def test_rejects_non_positive_stiffness(self):
        with self.assertRaises(exceptions.InvalidSpec):
            PlantConfig(axial_stiffness=0.0)


class TestForceModel(unittest.TestCase):
    def setUp(self):
        self.cfg = PlantConfig()

    def test_rest_line_feels_gravity_only(self):
        forces = force_model(rest_state(self.cfg), np.zeros(3), self.cfg)

        assert_allclose(forces[:, :2], 0.0, atol=1e-15)
        assert_allclose(forces[:, 2], -self.cfg.masses * self.cfg.gravity, atol=1e-12)

    def test_equal_muscles_push_axially(self):
        state = rest_state(self.cfg)
        c = 0.6
        muscles = force_model(state, np.full(3, c), self.cfg) - force_model(state, np.zeros(3), self.cfg)

        assert_allclose(muscles[:, :2], 0.0, atol=1e-15)
        self.assertTrue(np.all(muscles[:, 2] > 0))

    def test_stretched_segment_tension(self):
        cfg = PlantConfig(node_count=2, gravity=0.0, bending_stiffness=1e-12, damping=0.0)
        positions = np.array([[0.0, 0.0, -0.06], [0.0, 0.0, -0.11]])
        state = PlantState(positions=positions, velocities=np.zeros_like(positions))

        forces = force_model(state, np.zeros(3), cfg)

        # the anchor segment is stretched by 0.01 m, the second one is at rest length
        self.assertAlmostEqual(forces[0, 2], 0.505, places=9)
        self.assertAlmostEqual(forces[1, 2], 0.0, places=9)

    def test_damping_opposes_velocity(self):
        state = rest_state(self.cfg)
        moving = PlantState(positions=state.positions, velocities=np.ones_like(state.positions))

        delta = force_model(moving, np.zeros(3), self.cfg) - force_model(state, np.zeros(3), self.cfg)

        assert_allclose(delta, -self.cfg.damping, atol=1e-15)


class TestObserve(unittest.TestCase):
    def test_rest_geometry(self):
        x = observe(rest_state(PlantConfig()))
        expected = np.column_stack([np.zeros(15), np.zeros(15), -0.05 * np.arange(1, 16)]).reshape(-1)

        self.assertEqual(x.shape, (45,))
        assert_allclose(x, expected)

    def test_injective(self):
        state = rest_state(PlantConfig())
        moved = PlantState(positions=state.positions.copy(), velocities=state.velocities)
        moved.positions[4, 1] += 1e-6

        self.assertFalse(np.array_equal(observe(state), observe(moved)))


class TestDynamics(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.cfg = PlantConfig()
        cls.equilibrium = settle(cls.cfg)

    def test_equilibrium_is_stationary(self):
        after = step(self.equilibrium, np.zeros(3), self.cfg)

        assert_array_equal(self.equilibrium.velocities, 0.0)
        assert_allclose(after.positions, self.equilibrium.positions, rtol=0, atol=1e-12)
        assert_allclose(after.velocities, 0.0, atol=1e-9)

    def test_equilibrium_lies_on_the_axis(self):
        assert_allclose(self.equilibrium.positions[:, :2], 0.0, atol=1e-12)
        self.assertTrue(np.all(np.diff(self.equilibrium.positions[:, 2]) < 0))

    def test_equal_inputs_keep_the_arm_on_axis(self):
        trajectory, _ = simulate(self.equilibrium, np.full((100, 3), 0.5), self.cfg)
        x0 = observe(self.equilibrium)
        xy = np.ones(45, dtype=bool)
        xy[2::3] = False

        assert_allclose(trajectory.states[:, xy], np.tile(x0[xy], (101, 1)), atol=1e-9)

    def test_single_muscle_bends_the_arm(self):
        first, _ = simulate(self.equilibrium, np.tile([1.0, 0.0, 0.0], (100, 1)), self.cfg)
        second, _ = simulate(self.equilibrium, np.tile([0.0, 1.0, 0.0], (100, 1)), self.cfg)
        tip = first.states[:, -3:]
        c, s = np.cos(2 * np.pi / 3), np.sin(2 * np.pi / 3)
        rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

        # muscle 2 is muscle 1 turned a third of a revolution about the vertical axis
        assert_allclose(second.states[:, -3:], tip @ rotation.T, rtol=0, atol=1e-9)
        self.assertGreater(np.hypot(tip[-1, 0], tip[-1, 1]), 1e-3)
        self.assertGreater(tip[-1, 2], self.equilibrium.positions[-1, 2])

    def test_empty_inputs(self):
        trajectory, final = simulate(self.equilibrium, [], self.cfg)

        self.assertEqual(len(trajectory), 1)
        assert_array_equal(trajectory.states[0], observe(self.equilibrium))
        self.assertIs(final, self.equilibrium)

    def test_deterministic(self):
        u = np.random.default_rng(2).uniform(0.3, 0.85, size=(50, 3))
        first, _ = simulate(self.equilibrium, u, self.cfg)
        second, _ = simulate(self.equilibrium, u, self.cfg)

        assert_array_equal(first.states, second.states)

    def test_energy_decays_without_input(self):
        state = rest_state(self.cfg)
        energies = [energy(state, self.cfg)]
        for _ in range(1500):
            state = step(state, np.zeros(3), self.cfg)
            energies.append(energy(state, self.cfg))

        increases = np.diff(energies)
        self.assertLessEqual(increases.max(), 1e-9, int(np.argmax(increases)))
        self.assertLess(energies[-1], energies[0])

    def test_energy_is_constant_at_equilibrium(self):
        _, state = simulate(self.equilibrium, np.zeros((50, 3)), self.cfg)

        self.assertAlmostEqual(energy(state, self.cfg), energy(self.equilibrium, self.cfg), places=9)

    def test_bounded_under_saturated_inputs(self):
        u = np.random.default_rng(9).integers(0, 2, size=(60, 3)).repeat(50, axis=0).astype(float)
        trajectory, _ = simulate(self.equilibrium, u, self.cfg)
        reach = np.linalg.norm(trajectory.states.reshape(len(trajectory), -1, 3), axis=2)

        self.assertLessEqual(reach.max(), 2 * self.cfg.node_count * self.cfg.segment_rest_length)

    def test_rejects_inputs_out_of_range(self):
        with self.assertRaises(exceptions.InvalidSpec):
            step(self.equilibrium, [1.2, 0.0, 0.0], self.cfg)

    def test_measurement_noise_is_seeded(self):
        cfg = PlantConfig(noise_std=1e-3)
        u = np.full((20, 3), 0.5)
        first, _ = simulate(self.equilibrium, u, cfg, seed=4)
        second, _ = simulate(self.equilibrium, u, cfg, seed=4)
        clean, _ = simulate(self.equilibrium, u, self.cfg)

        assert_array_equal(first.states, second.states)
        self.assertGreater(np.abs(first.states - clean.states).max(), 0.0)


class TestTrajectory(unittest.TestCase):
    def test_window_keeps_alignment(self):
        trajectory = Trajectory(sample_dt=0.02, states=np.arange(10.0)[:, None], inputs=np.arange(9.0)[:, None])
        window = trajectory.window(3, 7)

        assert_array_equal(window.states[:, 0], [3, 4, 5, 6])
        assert_array_equal(window.inputs[:, 0], [3, 4, 5, 6])
        assert_allclose(window.times, [0.06, 0.08, 0.10, 0.12])

    def test_aligned_drops_the_trailing_state(self):
        trajectory = Trajectory(sample_dt=0.02, states=np.zeros((5, 2)), inputs=np.zeros((4, 1)))

        self.assertEqual(len(trajectory.aligned()), 4)

    def test_rejects_misaligned_inputs(self):
        with self.assertRaises(exceptions.InvalidSpec):
            Trajectory(sample_dt=0.02, states=np.zeros((5, 2)), inputs=np.zeros((3, 1)))


if __name__ == '__main__':
    unittest.main()

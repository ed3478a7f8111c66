import os
import sys
import unittest
from unittest import mock

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../')))

from switchlq.exceptions import ConfigError, SimulationDivergedError
from switchlq.model import InitialTriple
from switchlq.riccati import solve_are, solve_dre
from switchlq.simulate import (
    SimulationConfig, estimate_cost, simulate_closed_loop, simulate_coupled, simulate_paths,
)
from switchlq.stability import initial_moment, propagate_second_moment
from switchlq.turnpike import verify_turnpike_bound
from switchlq.utils.runtime import THREADS_ENV
from tests.corpus import CORPUS, SCALAR1, SCALAR2, TWOREG, scalar


class TestConfig(unittest.TestCase):
    def test_rejects_bad_values(self):
        with self.assertRaises(ConfigError):
            SimulationConfig(dt=0.0, n_paths=10)
        with self.assertRaises(ConfigError):
            SimulationConfig(dt=0.1, n_paths=0)
        with self.assertRaises(ConfigError):
            SimulationConfig(dt=0.1, n_paths=10, scheme="milstein")


class TestClosedLoop(unittest.TestCase):
    def test_deterministic_scalar1(self):
        cfg = SimulationConfig(dt=1e-3, n_paths=4)
        stats = simulate_closed_loop(SCALAR1, [[[-1.0]]], InitialTriple(0.0, [1.0], 0), 2.0, cfg)
        np.testing.assert_allclose(stats.mean_sq_state, np.exp(-2 * stats.times), atol=2e-3)
        np.testing.assert_array_equal(stats.mean_sq_state_se, 0.0)

    def test_reproducible_single_path(self):
        cfg = SimulationConfig(dt=1e-2, n_paths=1, seed=42)
        gains = solve_are(TWOREG).theta
        a = simulate_closed_loop(TWOREG, gains, InitialTriple(0.0, [1.0], 0), 3.0, cfg)
        b = simulate_closed_loop(TWOREG, gains, InitialTriple(0.0, [1.0], 0), 3.0, cfg)
        np.testing.assert_array_equal(a.mean_sq_state, b.mean_sq_state)
        self.assertEqual(a.mean_cost, b.mean_cost)

    def test_independent_of_thread_count(self):
        cfg = SimulationConfig(dt=1e-2, n_paths=600, seed=3, batch_size=128)
        gains = solve_are(SCALAR2).theta
        results = []
        for threads in ("1", "4"):
            with mock.patch.dict(os.environ, {THREADS_ENV: threads}):
                results.append(simulate_closed_loop(SCALAR2, gains, InitialTriple(0.0, [1.0], 0), 1.0, cfg))
        np.testing.assert_array_equal(results[0].mean_sq_state, results[1].mean_sq_state)
        self.assertEqual(results[0].mean_cost, results[1].mean_cost)

    def test_zero_start(self):
        cfg = SimulationConfig(dt=1e-2, n_paths=20)
        stats = simulate_closed_loop(TWOREG, solve_are(TWOREG).theta, InitialTriple(0.0, [0.0], 1), 1.0, cfg)
        self.assertFalse(np.any(stats.mean_sq_state))
        self.assertEqual(stats.mean_cost, 0.0)
        self.assertAlmostEqual(stats.occupation.sum(), 1.0, places=12)

    def test_moments_match_ode(self):
        cfg = SimulationConfig(dt=1e-3, n_paths=10_000, seed=17)
        for p in CORPUS:
            gains = solve_are(p).theta
            for regime in range(p.dims.m0):
                stats = simulate_closed_loop(p, gains, InitialTriple(0.0, [1.0], regime), 2.0, cfg, output_points=21)
                exact = propagate_second_moment(p, gains, initial_moment(p, [1.0], regime), stats.times).mean_square
                allowance = 3 * stats.mean_sq_state_se + 10 * cfg.dt * np.max(exact)
                self.assertTrue(np.all(np.abs(stats.mean_sq_state - exact) <= allowance), (p.name, regime))

    def test_cost_matches_value(self):
        T = 2.0
        dre = solve_dre(SCALAR1, T)
        paths = simulate_paths(SCALAR1, dre, InitialTriple(0.0, [1.0], 0), T, SimulationConfig(dt=1e-3, n_paths=2))
        mean, se = estimate_cost(SCALAR1, paths)
        self.assertAlmostEqual(mean, 0.5 * np.tanh(T), delta=5e-3)
        self.assertEqual(se, 0.0)

    def test_divergence_detected(self):
        p = scalar(1000, 0, 0, 0, 1, 0, 1, "explosive")
        with self.assertRaises(SimulationDivergedError):
            simulate_closed_loop(p, [[[0.0]]], InitialTriple(0.0, [1.0], 0), 1.0, SimulationConfig(dt=1e-3, n_paths=2))


class TestCoupled(unittest.TestCase):
    def test_identical_loops_have_zero_gap(self):
        gains = solve_are(SCALAR2).theta
        stats = simulate_coupled(SCALAR2, gains, gains, [1.0], [1.0], 0, 0.0, 2.0,
                                 SimulationConfig(dt=1e-2, n_paths=50))
        self.assertFalse(np.any(stats.gap_state))
        self.assertFalse(np.any(stats.gap_control))

    def test_common_noise_reduces_variance(self):
        T = 4.0
        dre = solve_dre(SCALAR2, T)
        theta = solve_are(SCALAR2).theta
        cfg = SimulationConfig(dt=1e-2, n_paths=500, seed=5)
        common = simulate_coupled(SCALAR2, dre, theta, [1.0], [1.0], 0, 0.0, T, cfg)
        independent = simulate_coupled(SCALAR2, dre, theta, [1.0], [1.0], 0, 0.0, T, cfg, common_noise=False)
        mid = len(common.times) // 2
        self.assertLess(common.gap_state[mid], independent.gap_state[mid])
        self.assertLess(common.gap_state_se[mid], independent.gap_state_se[mid])

    def test_gaps_match_joint_moment_series(self):
        T = 4.0
        cfg = SimulationConfig(dt=1e-3, n_paths=10_000, seed=23)
        for p in CORPUS:
            dre = solve_dre(p, T)
            are = solve_are(p)
            stats = simulate_coupled(p, dre, are.theta, [1.0], [0.5], 0, 0.0, T, cfg, output_points=21)
            bound = verify_turnpike_bound(p, [1.0], [0.5], 0, 0.0, T, stats.times, are=are, dre=dre)
            for mc, se, exact in ((stats.gap_state, stats.gap_state_se, bound.state.values),
                                  (stats.gap_control, stats.gap_control_se, bound.control.values)):
                allowance = 3 * se + 10 * cfg.dt * np.max(exact)
                self.assertTrue(np.all(np.abs(mc - exact) <= allowance), p.name)

    def test_start_gap(self):
        gains = solve_are(SCALAR1).theta
        stats = simulate_coupled(SCALAR1, gains, gains, [2.0], [0.5], 0, 0.0, 1.0,
                                 SimulationConfig(dt=1e-2, n_paths=3))
        self.assertAlmostEqual(stats.gap_state[0], 2.25)


if __name__ == "__main__":
    unittest.main()

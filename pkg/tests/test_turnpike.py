import hashlib
import json
import os
import sys
import tempfile
import unittest

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../')))

from switchlq.exceptions import FitError, HorizonCapError
from switchlq.riccati import gain_lipschitz_constant, solve_are, solve_dre
from switchlq.simulate import SimulationConfig
from switchlq.turnpike import (
    GapSeries, TurnpikeSettings, fit_exponential_rate, gain_gap_series, integral_gap, riccati_gap_series,
    run_experiment, semigroup_check, verify_turnpike_bound, write_report,
)
from tests.corpus import SCALAR1, SCALAR2, TWOREG, random_valid_problem, scalar


class TestRateFit(unittest.TestCase):
    def test_exact_exponential(self):
        tau = np.linspace(0.0, 5.0, 11)
        fit = fit_exponential_rate(GapSeries(tau, 3 * np.exp(-1.5 * tau), "riccati_gap"), window=None)
        self.assertAlmostEqual(fit.K_hat, 3.0, places=10)
        self.assertAlmostEqual(fit.delta_hat, 1.5, places=10)
        self.assertAlmostEqual(fit.r_squared, 1.0, delta=1e-10)
        self.assertEqual(fit.window, (0.0, 5.0))

    def test_zero_values_excluded(self):
        tau = np.arange(7.0)
        values = np.exp(-tau)
        values[3] = 0.0
        fit = fit_exponential_rate(GapSeries(tau, values, "gain_gap"), window=None)
        self.assertEqual(fit.n_points, 6)
        self.assertAlmostEqual(fit.delta_hat, 1.0, places=10)

    def test_too_few_points(self):
        tau = np.arange(6.0)
        with self.assertRaises(FitError):
            fit_exponential_rate(GapSeries(tau, np.array([1.0, 0.5, 0.0, 0.0, 0.0, 0.0]), "gain_gap"), window=None)

    def test_series_invariants(self):
        with self.assertRaises(ValueError):
            GapSeries(np.array([0.0, 0.0]), np.array([1.0, 1.0]), "riccati_gap")
        with self.assertRaises(ValueError):
            GapSeries(np.array([0.0, 1.0]), np.array([1.0, -1.0]), "riccati_gap")
        with self.assertRaises(ValueError):
            GapSeries(np.array([0.0, 1.0]), np.array([1.0, 1.0]), "other")


class TestGapSeries(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.are1 = solve_are(SCALAR1)
        cls.dre1 = solve_dre(SCALAR1, 10.0, np.linspace(0.0, 10.0, 201))

    def test_scalar1_riccati_gap(self):
        series, fit = riccati_gap_series(SCALAR1, 10.0, are=self.are1, dre=self.dre1)
        np.testing.assert_allclose(series.values, 1 - np.tanh(series.abscissa), atol=1e-8)
        self.assertAlmostEqual(series.values[0], 1.0, places=12)
        self.assertLessEqual(abs(fit.delta_hat - 2.0), 0.1)
        self.assertLessEqual(abs(fit.K_hat - 2.0), 0.2)
        self.assertGreaterEqual(fit.r_squared, 0.999)

    def test_scalar1_gain_gap(self):
        series, fit = gain_gap_series(SCALAR1, 10.0, are=self.are1, dre=self.dre1)
        self.assertAlmostEqual(series.values[0], 1.0, places=12)
        self.assertTrue(1.9 <= fit.delta_hat <= 2.1)
        self.assertGreaterEqual(fit.r_squared, 0.999)

    def test_tworeg_decay(self):
        are = solve_are(TWOREG)
        series, fit = riccati_gap_series(TWOREG, 12.0, np.linspace(0.0, 12.0, 241), are=are)
        self.assertGreaterEqual(fit.r_squared, 0.999)
        self.assertLessEqual(fit.delta_hat, 1.1 * -are.closed_loop_rate)
        self.assertTrue(np.all(np.diff(series.values) <= 1e-9))

    def test_gain_gap_below_lipschitz_bound(self):
        are = solve_are(TWOREG)
        dre = solve_dre(TWOREG, 8.0, np.linspace(0.0, 8.0, 81))
        riccati, _ = riccati_gap_series(TWOREG, 8.0, are=are, dre=dre)
        gain, _ = gain_gap_series(TWOREG, 8.0, are=are, dre=dre)
        c = gain_lipschitz_constant(TWOREG, are.P, min(are.delta_margin, dre.delta_margin))
        self.assertTrue(np.all(gain.values <= c * riccati.values + 1e-12))


class TestTurnpikeBound(unittest.TestCase):
    def test_scalar1_equal_starts(self):
        bound = verify_turnpike_bound(SCALAR1, [1.0], [1.0], 0, 0.0, 10.0, np.linspace(0.0, 10.0, 201))
        self.assertLessEqual(bound.state.values[100], 1e-6)
        self.assertTrue(bound.passed)
        self.assertGreater(bound.state_fit.delta, 0)

    def test_start_gap_exact(self):
        bound = verify_turnpike_bound(SCALAR1, [2.0], [0.5], 0, 0.0, 6.0)
        self.assertAlmostEqual(bound.state.values[0], 2.25, places=12)
        self.assertTrue(bound.passed)

    def test_zero_starts(self):
        bound = verify_turnpike_bound(TWOREG, [0.0], [0.0], 1, 0.0, 5.0)
        self.assertFalse(np.any(bound.state.values))
        self.assertTrue(bound.passed)

    def test_switched_start_regimes(self):
        for regime in (0, 1):
            bound = verify_turnpike_bound(TWOREG, [1.0], [1.0], regime, 0.0, 10.0)
            self.assertEqual(bound.state.values[0], 0.0)
            self.assertTrue(bound.passed, regime)

    def test_corpus_dominated(self):
        for p in (SCALAR2, TWOREG, random_valid_problem(9)):
            x = np.linspace(1.0, -1.0, p.dims.n)
            bound = verify_turnpike_bound(p, x, 0.5 * x, 0, 1.0, 8.0)
            self.assertTrue(bound.passed, p.name)

    def test_integral_gap(self):
        series = integral_gap(SCALAR1, [1.0], 0, [12.0, 6.0, 10.0, 8.0])
        np.testing.assert_array_equal(series.abscissa, [6.0, 8.0, 10.0, 12.0])
        self.assertLessEqual(series.values[0], 1e-3)
        self.assertTrue(np.all(np.diff(series.values) <= 1e-12))

    def test_integral_gap_zero_state(self):
        series = integral_gap(TWOREG, [0.0], 0, [2.0, 4.0])
        self.assertFalse(np.any(series.values))


class TestSemigroup(unittest.TestCase):
    def test_t_zero_exact(self):
        self.assertEqual(semigroup_check(TWOREG, 4.0, 0.0), 0.0)

    def test_scalar1(self):
        self.assertLessEqual(semigroup_check(SCALAR1, 5.0, 2.0), 1e-9)

    def test_tworeg(self):
        self.assertLessEqual(semigroup_check(TWOREG, 8.0, 3.0), 1e-9)


class TestExperiment(unittest.TestCase):
    def test_scalar1_passes(self):
        report = run_experiment(SCALAR1)
        self.assertTrue(report.passed, [v.as_dict() for v in report.verdicts if not v.passed])
        self.assertTrue(1.9 <= report.fits["riccati_gap"].delta_hat <= 2.1)

    def test_tworeg_passes_with_monte_carlo(self):
        settings = TurnpikeSettings(T=6.0, grid_points=121, x=(1.0,), x_inf=(0.5,), T_list=(4.0, 6.0),
                                    mc=SimulationConfig(dt=5e-3, n_paths=1000, seed=1), mc_output_points=21)
        report = run_experiment(TWOREG, settings)
        self.assertTrue(report.passed, [v.as_dict() for v in report.verdicts if not v.passed])
        self.assertIn("monte_carlo_agreement", [v.name for v in report.verdicts])
        for verdict in report.verdicts:
            for kind in verdict.series:
                self.assertIn(kind, report.series)

    def test_unstabilizable_rejected_at_are_stage(self):
        with self.assertRaises(HorizonCapError):
            run_experiment(scalar(1, 0, 0, 0, 1, 0, 1, "unstabilizable"))

    def test_report_files_reproducible(self):
        settings = TurnpikeSettings(T=6.0, grid_points=61, T_list=(4.0, 6.0))
        config = b'{"id": "scalar1"}'
        contents = []
        for _ in range(2):
            report = run_experiment(SCALAR1, settings)
            with tempfile.TemporaryDirectory() as out:
                paths = write_report(report, out, config)
                contents.append({os.path.basename(path): open(path, "rb").read() for path in paths})
        self.assertEqual(contents[0], contents[1])
        stem = f"scalar1-{hashlib.sha256(config).hexdigest()[:12]}"
        self.assertIn(f"{stem}-riccati_gap.csv", contents[0])
        doc = json.loads(contents[0][f"{stem}-report.json"])
        self.assertEqual(doc["problem_id"], "scalar1")
        self.assertTrue(contents[0][f"{stem}-state_gap.csv"].startswith(b"s,value\n"))


if __name__ == "__main__":
    unittest.main()

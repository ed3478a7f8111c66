import contextlib
import csv
import io
import json
import math
import os
import shutil
import sys
import tempfile
import unittest

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../')))

from switchlq.cli.config import RunConfig, load_problem, parse_problem, parse_vector
from switchlq.cli.main import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from switchlq.exceptions import ConfigError
from tests.corpus import GOLDEN, INDEFINITE_R, SCALAR1, SCALAR2, TWOREG, problem_path

with open(problem_path("tworeg")) as _fh:
    TWOREG_TEXT = _fh.read()


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.out = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.out, ignore_errors=True)

    def write_config(self, text, name="problem.json"):
        path = os.path.join(self.out, name)
        with open(path, "w") as fh:
            fh.write(text)
        return path


class TestConfigParsing(CliTestCase):
    def test_sample_configs_load(self):
        for name in ("scalar1", "scalar2", "tworeg", "indefinite_r"):
            config = load_problem(problem_path(name))
            self.assertEqual(config.problem_id, name)
        self.assertEqual(load_problem(problem_path("tworeg")).problem.dims.m0, 2)

    def test_sample_configs_match_corpus(self):
        for instance in (SCALAR1, SCALAR2, TWOREG, INDEFINITE_R):
            loaded = load_problem(problem_path(instance.name)).problem
            for name in ("A", "B", "C", "D"):
                np.testing.assert_array_equal(getattr(loaded.coeffs, name), getattr(instance.coeffs, name))
            for name in ("Q", "S", "R"):
                np.testing.assert_array_equal(getattr(loaded.cost, name), getattr(instance.cost, name))
            np.testing.assert_array_equal(loaded.generator.rates, instance.generator.rates)

    def test_syntax_error_names_line(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_problem(b'{\n  "dims": {"n": 1,, "m": 1}\n}')
        self.assertEqual(ctx.exception.line, 2)
        self.assertIn("line 2", str(ctx.exception))

    def test_missing_matrix_names_field(self):
        doc = json.loads(TWOREG_TEXT)
        del doc["regimes"][1]["Q"]
        with self.assertRaises(ConfigError) as ctx:
            parse_problem(json.dumps(doc).encode())
        self.assertEqual(ctx.exception.field, "regimes[2].Q")

    def test_wrong_shape(self):
        doc = json.loads(TWOREG_TEXT)
        doc["regimes"][0]["B"] = [[1, 2]]
        with self.assertRaises(ConfigError) as ctx:
            parse_problem(json.dumps(doc).encode())
        self.assertEqual(ctx.exception.field, "regimes[1].B")

    def test_optional_fields(self):
        doc = {"dims": {"n": 1, "m": 1, "m0": 1},
               "regimes": [{"A": 0, "B": 1, "C": 0, "D": 0, "Q": 1, "R": 1}]}
        config = parse_problem(json.dumps(doc).encode(), default_id="bare")
        self.assertEqual(config.problem_id, "bare")
        self.assertFalse(np.any(config.problem.cost.S))
        self.assertIsNone(config.initial_x)

    def test_generator_required_for_several_regimes(self):
        doc = json.loads(TWOREG_TEXT)
        del doc["generator"]
        with self.assertRaises(ConfigError):
            parse_problem(json.dumps(doc).encode())

    def test_run_config(self):
        with self.assertRaises(ConfigError):
            RunConfig("p.json", out_dir=self.out, tol=0.0).validate()
        with self.assertRaises(ConfigError):
            RunConfig("p.json", out_dir=self.out, paths=0).validate()
        config = load_problem(problem_path("tworeg"))
        x, regime = RunConfig("p.json", out_dir=self.out, regime=2, x0="3").start(config)
        self.assertEqual(regime, 1)
        np.testing.assert_array_equal(x, [3.0])

    def test_parse_vector(self):
        np.testing.assert_array_equal(parse_vector("1,2.5", 2), [1.0, 2.5])
        with self.assertRaises(ConfigError):
            parse_vector("1,x", 2)
        with self.assertRaises(ConfigError):
            parse_vector("1", 2)


class TestValidateCommand(CliTestCase):
    def test_scalar1_ok(self):
        code, out, _ = run("validate", "--problem", problem_path("scalar1"), "--out", self.out)
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(os.path.exists(os.path.join(self.out, "validation.json")))

    def test_indefinite_R_fails_validation(self):
        code, _, err = run("validate", "--problem", problem_path("indefinite_r"), "--out", self.out)
        self.assertEqual(code, EXIT_FAILURE)
        self.assertIn("R not positive definite", err)

    def test_generator_row_sum(self):
        doc = json.loads(TWOREG_TEXT)
        doc["generator"] = [[-1, 1.1], [1, -1]]
        code, _, err = run("validate", "--problem", self.write_config(json.dumps(doc)), "--out", self.out)
        self.assertEqual(code, EXIT_FAILURE)
        self.assertIn("row 1", err)

    def test_malformed_config(self):
        code, _, err = run("validate", "--problem", self.write_config("{\"dims\": "), "--out", self.out)
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("line 1", err)

    def test_missing_file(self):
        code, _, _ = run("validate", "--problem", os.path.join(self.out, "nope.json"), "--out", self.out)
        self.assertEqual(code, EXIT_USAGE)


class TestSolverCommands(CliTestCase):
    def test_dre_scalar1(self):
        code, _, _ = run("dre", "--problem", problem_path("scalar1"), "--horizon", "5", "--grid", "51",
                         "--out", self.out)
        self.assertEqual(code, EXIT_OK)
        rows = read_rows(os.path.join(self.out, "P.csv"))
        by_time = {float(row["t"]): float(row["value"]) for row in rows}
        self.assertAlmostEqual(by_time[0.0], math.tanh(5.0), delta=1e-8)
        self.assertEqual(by_time[5.0], 0.0)
        self.assertEqual(rows[0]["regime"], "1")
        self.assertTrue(os.path.exists(os.path.join(self.out, "Theta.csv")))

    def test_dre_rejects_zero_tolerance(self):
        code, _, _ = run("dre", "--problem", problem_path("scalar1"), "--tol", "0", "--out", self.out)
        self.assertEqual(code, EXIT_USAGE)

    def test_bad_flag_is_usage_error(self):
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                main(["dre", "--problem", problem_path("scalar1"), "--horizon", "abc"])
        self.assertEqual(ctx.exception.code, EXIT_USAGE)

    def test_are_scalar2(self):
        code, _, _ = run("are", "--problem", problem_path("scalar2"), "--out", self.out)
        self.assertEqual(code, EXIT_OK)
        with open(os.path.join(self.out, "Pinf.txt")) as fh:
            doc = json.load(fh)
        self.assertAlmostEqual(doc["P"][0][0][0], GOLDEN, delta=1e-10)
        self.assertLessEqual(doc["residual_norm"], 1e-10)

    def test_are_failure_exit_code(self):
        doc = {"id": "unstable", "dims": {"n": 1, "m": 1, "m0": 1},
               "regimes": [{"A": 1, "B": 0, "C": 0, "D": 0, "Q": 1, "R": 1}]}
        code, _, err = run("are", "--problem", self.write_config(json.dumps(doc)), "--out", self.out)
        self.assertEqual(code, EXIT_FAILURE)
        self.assertIn("horizon cap reached", err)


class TestSimulateCommand(CliTestCase):
    def simulate(self, out, *extra):
        return run("simulate", "--problem", problem_path("tworeg"), "--paths", "1", "--dt", "0.01",
                   "--horizon", "2", "--seed", "9", "--out", out, *extra)

    def test_single_path_reproducible(self):
        other = tempfile.mkdtemp()
        try:
            self.assertEqual(self.simulate(self.out)[0], EXIT_OK)
            self.assertEqual(self.simulate(other)[0], EXIT_OK)
            with open(os.path.join(self.out, "stats.csv"), "rb") as a, open(os.path.join(other, "stats.csv"), "rb") as b:
                self.assertEqual(a.read(), b.read())
        finally:
            shutil.rmtree(other, ignore_errors=True)

    def test_chain_and_moment_files(self):
        code, _, _ = self.simulate(self.out, "--horizon", "5", "--x0", "2")
        self.assertEqual(code, EXIT_OK)
        chain = read_rows(os.path.join(self.out, "chain.csv"))
        self.assertEqual((chain[0]["time"], chain[0]["regime"]), ("0.0", "1"))
        times = [float(row["time"]) for row in chain]
        regimes = [int(row["regime"]) for row in chain]
        self.assertTrue(all(b > a for a, b in zip(times, times[1:])))
        self.assertLess(times[-1], 5.0)
        self.assertTrue(all(a != b for a, b in zip(regimes, regimes[1:])))
        self.assertTrue(set(regimes) <= {1, 2})

        stats = read_rows(os.path.join(self.out, "stats.csv"))
        mean_square = read_rows(os.path.join(self.out, "mean_square.csv"))
        moments = read_rows(os.path.join(self.out, "moments.csv"))
        self.assertEqual([row["t"] for row in mean_square], [row["t"] for row in stats])
        self.assertEqual(len(moments), 2 * len(mean_square))
        self.assertAlmostEqual(float(mean_square[0]["mean_sq_state"]), 4.0, places=12)
        self.assertEqual([row["value"] for row in moments[:2]], ["4.0", "0.0"])
        for k, row in enumerate(mean_square):
            block = moments[2 * k:2 * k + 2]
            self.assertEqual({b["regime"] for b in block}, {"1", "2"})
            self.assertAlmostEqual(sum(float(b["value"]) for b in block), float(row["mean_sq_state"]), places=12)
        values = [float(row["mean_sq_state"]) for row in mean_square]
        self.assertTrue(all(b < a for a, b in zip(values, values[1:])))

    def test_zero_initial_state(self):
        code, _, _ = self.simulate(self.out, "--x0", "0", "--gains", "are")
        self.assertEqual(code, EXIT_OK)
        rows = read_rows(os.path.join(self.out, "stats.csv"))
        self.assertTrue(all(float(row["mean_sq_state"]) == 0.0 for row in rows))


class TestTurnpikeCommand(CliTestCase):
    def test_scalar1_passes(self):
        code, out, _ = run("turnpike", "--problem", problem_path("scalar1"), "--horizon", "8", "--grid", "161",
                           "--out", self.out)
        self.assertEqual(code, EXIT_OK, out)
        self.assertNotIn("FAIL", out)
        names = os.listdir(self.out)
        self.assertTrue(any(name.endswith("-report.json") for name in names))
        self.assertTrue(all(name.startswith("scalar1-") for name in names))


if __name__ == "__main__":
    unittest.main()

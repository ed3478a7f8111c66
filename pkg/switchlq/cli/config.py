"""
Problem configs and run parameters of the command-line tool.

A problem config is a JSON document::

    {
      "id": "tworeg",
      "dims": {"n": 1, "m": 1, "m0": 2},
      "regimes": [{"A": [[0]], "B": [[1]], "C": [[0]], "D": [[0]],
                   "Q": [[1]], "S": [[0]], "R": [[1]]}, ...],
      "generator": [[-1, 1], [1, -1]],
      "initial": {"x": [1], "regime": 1}
    }

Regimes are numbered from 1 here and 0 in the Python API. ``S``, ``id``,
``initial`` and (for one regime) ``generator`` are optional; a 1×1 matrix may
be written as a bare number.
"""
import json
import logging
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from switchlq.exceptions import ConfigError, ProblemStructureError
from switchlq.model import LQProblem

logger = logging.getLogger(__name__)

MATRIX_FIELDS = ("A", "B", "C", "D", "Q", "S", "R")


@dataclass(frozen=True, eq=False)
class ProblemConfig:
    """A parsed problem with its start triple (0-based regime) and the raw config bytes."""

    problem: LQProblem
    problem_id: str
    initial_x: Optional[np.ndarray]
    initial_regime: int
    raw: bytes


def _matrix(value, shape: Tuple[int, int], field: str) -> np.ndarray:
    if isinstance(value, bool):
        raise ConfigError("expected a matrix of numbers", field=field)
    if isinstance(value, (int, float)) and shape == (1, 1):
        value = [[value]]
    try:
        out = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("expected a matrix of numbers", field=field) from None
    if out.shape != shape:
        raise ConfigError(f"expected shape {shape[0]}x{shape[1]}, got {'x'.join(map(str, out.shape)) or 'scalar'}",
                          field=field)
    if not np.all(np.isfinite(out)):
        raise ConfigError("non-finite entry", field=field)
    return out


def _positive_int(dims: dict, key: str) -> int:
    value = dims.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"must be a positive integer, got {value!r}", field=f"dims.{key}")
    return value


def parse_problem(raw: bytes, default_id: str = "problem") -> ProblemConfig:
    """Parse config bytes; syntax errors name the line and column, others the field path."""
    try:
        doc = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not UTF-8 text ({exc.reason})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno, column=exc.colno) from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")

    dims = doc.get("dims")
    if not isinstance(dims, dict):
        raise ConfigError("missing object", field="dims")
    n, m, m0 = (_positive_int(dims, key) for key in ("n", "m", "m0"))

    regimes = doc.get("regimes")
    if not isinstance(regimes, list) or len(regimes) != m0:
        raise ConfigError(f"expected a list of {m0} regimes", field="regimes")
    shapes = {"A": (n, n), "B": (n, m), "C": (n, n), "D": (n, m), "Q": (n, n), "S": (m, n), "R": (m, m)}
    matrices = {key: [] for key in MATRIX_FIELDS}
    for k, regime in enumerate(regimes, start=1):
        if not isinstance(regime, dict):
            raise ConfigError("expected an object", field=f"regimes[{k}]")
        unknown = sorted(set(regime) - set(MATRIX_FIELDS))
        if unknown:
            raise ConfigError(f"unknown keys {unknown}", field=f"regimes[{k}]")
        for key in MATRIX_FIELDS:
            if key not in regime:
                if key == "S":
                    matrices[key].append(np.zeros(shapes[key]))
                    continue
                raise ConfigError("missing matrix", field=f"regimes[{k}].{key}")
            matrices[key].append(_matrix(regime[key], shapes[key], f"regimes[{k}].{key}"))

    if "generator" in doc:
        generator = _matrix(doc["generator"], (m0, m0), "generator")
    elif m0 == 1:
        generator = np.zeros((1, 1))
    else:
        raise ConfigError("required when m0 > 1", field="generator")

    problem_id = doc.get("id", default_id)
    if not isinstance(problem_id, str) or not problem_id:
        raise ConfigError("must be a non-empty string", field="id")

    initial_x, initial_regime = None, 0
    initial = doc.get("initial")
    if initial is not None:
        if not isinstance(initial, dict):
            raise ConfigError("expected an object", field="initial")
        if "x" in initial:
            initial_x = _matrix([initial["x"]], (1, n), "initial.x")[0]
        regime = initial.get("regime", 1)
        if isinstance(regime, bool) or not isinstance(regime, int) or not 1 <= regime <= m0:
            raise ConfigError(f"must be an integer in 1..{m0}, got {regime!r}", field="initial.regime")
        initial_regime = regime - 1

    try:
        problem = LQProblem.from_matrices(generator=generator, name=problem_id, **matrices)
    except ProblemStructureError as exc:
        raise ConfigError(str(exc), field=exc.field) from None
    return ProblemConfig(problem, problem_id, initial_x, initial_regime, raw)


def load_problem(path: str) -> ProblemConfig:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", field="problem") from None
    default_id = os.path.splitext(os.path.basename(path))[0] or "problem"
    return parse_problem(raw, default_id)


def parse_vector(text: str, n: int, field: str = "x0") -> np.ndarray:
    """``"v1,v2,..."`` as a length-n vector."""
    try:
        values = np.array([float(part) for part in text.split(",")])
    except ValueError:
        raise ConfigError(f"expected {n} comma-separated numbers, got {text!r}", field=field) from None
    if values.shape != (n,) or not np.all(np.isfinite(values)):
        raise ConfigError(f"expected {n} finite comma-separated numbers, got {text!r}", field=field)
    return values


@dataclass(frozen=True)
class RunConfig:
    """Command-line run parameters, checked before any computation starts."""

    problem_path: str
    out_dir: str = "out"
    horizon: float = 5.0
    grid: int = 101
    tol: float = 1e-10
    paths: int = 1000
    dt: float = 1e-3
    seed: int = 0
    regime: Optional[int] = None
    x0: Optional[str] = None
    newton: bool = True
    mc: bool = False

    def validate(self) -> "RunConfig":
        if not self.tol > 0:
            raise ConfigError(f"must be positive, got {self.tol}", field="tol")
        if not self.horizon > 0:
            raise ConfigError(f"must be positive, got {self.horizon}", field="horizon")
        if self.grid < 2:
            raise ConfigError(f"needs at least 2 points, got {self.grid}", field="grid")
        if self.paths < 1:
            raise ConfigError(f"must be at least 1, got {self.paths}", field="paths")
        if not self.dt > 0:
            raise ConfigError(f"must be positive, got {self.dt}", field="dt")
        if self.seed < 0:
            raise ConfigError(f"must be nonnegative, got {self.seed}", field="seed")
        try:
            os.makedirs(self.out_dir, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create {self.out_dir}: {exc.strerror}", field="out") from None
        if not os.access(self.out_dir, os.W_OK):
            raise ConfigError(f"{self.out_dir} is not writable", field="out")
        return self

    def start(self, config: ProblemConfig) -> Tuple[np.ndarray, int]:
        """Initial state and 0-based regime: flags first, then the config's ``initial``, then ones and regime 1."""
        p = config.problem
        if self.x0 is not None:
            x = parse_vector(self.x0, p.dims.n)
        elif config.initial_x is not None:
            x = config.initial_x
        else:
            x = np.ones(p.dims.n)
        if self.regime is None:
            return x, config.initial_regime
        if not 1 <= self.regime <= p.dims.m0:
            raise ConfigError(f"must be in 1..{p.dims.m0}, got {self.regime}", field="regime")
        return x, self.regime - 1

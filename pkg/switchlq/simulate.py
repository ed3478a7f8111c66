"""
Monte Carlo simulation of the closed-loop switched SDE.

Euler-Maruyama on a uniform base grid, with every step split exactly at the
chain's jump times so the regime is constant on each sub-step. The Brownian
increment of a split step is divided with a Brownian bridge, so the driving
path W is the same whether or not a step is split.

Path k draws its chain, Brownian and bridge numbers from independent
substreams of ``derive_seed(seed, k, stream)``; results for path k do not
depend on how many paths are drawn, and two systems simulated with the same
streams share (W, α) exactly.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from switchlq.exceptions import ConfigError, ProblemStructureError, SimulationDivergedError
from switchlq.markov import ChainPath, sample_chain_path
from switchlq.model import InitialTriple, LQProblem, as_gain_schedule, closed_loop
from switchlq.utils.runtime import (
    STREAM_BRIDGE, STREAM_BROWNIAN, STREAM_CHAIN, STREAM_INDEPENDENT, derive_seed, make_rng, ordered_map,
)

logger = logging.getLogger(__name__)

OVERFLOW_LIMIT = 1e150
DEFAULT_BATCH = 256
DEFAULT_OUTPUT_POINTS = 101


@dataclass(frozen=True)
class SimulationConfig:
    """Monte Carlo settings. The base step is shrunk so it divides the horizon."""

    dt: float
    n_paths: int
    seed: int = 0
    scheme: str = "euler-maruyama"
    batch_size: int = DEFAULT_BATCH

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}", field="dt")
        if int(self.n_paths) < 1:
            raise ConfigError(f"n_paths must be at least 1, got {self.n_paths}", field="paths")
        if self.scheme != "euler-maruyama":
            raise ConfigError(f"unsupported scheme {self.scheme!r}", field="scheme")
        if int(self.batch_size) < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}", field="batch_size")


@dataclass(frozen=True, eq=False)
class SampledPaths:
    """Trajectories on the base grid: states (paths, times, n), controls (paths, times, m), regimes (paths, times)."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    regimes: np.ndarray
    chains: List[ChainPath] = field(default_factory=list, repr=False)


@dataclass(frozen=True, eq=False)
class PathStats:
    """Across-path statistics of a closed-loop simulation."""

    times: np.ndarray
    mean_sq_state: np.ndarray
    mean_sq_state_se: np.ndarray
    mean_cost: float
    mean_cost_se: float
    occupation: np.ndarray
    n_paths: int


@dataclass(frozen=True, eq=False)
class CoupledGapStats:
    """E|X̄_T - X̄_∞|² and E|ū_T - ū_∞|² with standard errors."""

    times: np.ndarray
    gap_state: np.ndarray
    gap_state_se: np.ndarray
    gap_control: np.ndarray
    gap_control_se: np.ndarray
    n_paths: int
    common_noise: bool = True


def mean_and_se(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean over axis 0 and its standard error from the across-path variance."""
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    if values.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])


def base_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    steps = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    return np.linspace(t0, t1, steps + 1)


def output_indices(n_steps: int, points: int) -> np.ndarray:
    return np.unique(np.round(np.linspace(0, n_steps, min(points, n_steps + 1))).astype(int))


class _Engine:
    """Vectorized Euler-Maruyama over a batch of paths for one gain schedule."""

    def __init__(self, p: LQProblem, gains, times: np.ndarray):
        self.p = p
        self.times = times
        schedule = as_gain_schedule(gains)
        self.gains = np.stack([p.check_gain(schedule(float(t))) for t in times])
        closed = [closed_loop(p, theta) for theta in self.gains]
        self.A = np.stack([a for a, _ in closed])
        self.C = np.stack([c for _, c in closed])

    def run(self, x0: np.ndarray, regime: int, seed: int, path_ids: Sequence[int],
            stream_offset: int = 0) -> SampledPaths:
        p, times = self.p, self.times
        n_paths, n_steps = len(path_ids), len(times) - 1
        t0, t1 = float(times[0]), float(times[-1])
        h = (t1 - t0) / n_steps

        chains = [
            sample_chain_path(p.generator, regime, t0, t1, derive_seed(seed, k, STREAM_CHAIN + stream_offset))
            for k in path_ids
        ]
        dW = np.stack([
            make_rng(derive_seed(seed, k, STREAM_BROWNIAN + stream_offset)).standard_normal(n_steps)
            for k in path_ids
        ]) * math.sqrt(h)
        max_jumps = max(c.n_jumps for c in chains)
        jump_times = np.full((n_paths, max_jumps + 1), np.inf)
        chain_states = np.full((n_paths, max_jumps + 1), regime, dtype=int)
        bridge = np.zeros((n_paths, max_jumps + 1))
        for row, (k, chain) in enumerate(zip(path_ids, chains)):
            jump_times[row, :chain.n_jumps] = chain.jump_times
            chain_states[row, :chain.n_jumps + 1] = chain.states
            if chain.n_jumps:
                rng = make_rng(derive_seed(seed, k, STREAM_BRIDGE + stream_offset))
                bridge[row, :chain.n_jumps] = rng.standard_normal(chain.n_jumps)

        rows = np.arange(n_paths)
        X = np.broadcast_to(np.asarray(x0, dtype=float), (n_paths, p.dims.n)).copy()
        r = np.full(n_paths, regime, dtype=int)
        nxt = np.zeros(n_paths, dtype=int)
        next_jump = jump_times[:, 0].copy()

        states = np.empty((n_paths, n_steps + 1, p.dims.n))
        controls = np.empty((n_paths, n_steps + 1, p.dims.m))
        regimes = np.empty((n_paths, n_steps + 1), dtype=int)
        states[:, 0], regimes[:, 0] = X, r
        controls[:, 0] = np.einsum("pij,pj->pi", self.gains[0][r], X)

        for k in range(n_steps):
            t_next = float(times[k + 1])
            A, C = self.A[k], self.C[k]
            t_cur = np.full(n_paths, float(times[k]))
            w_rem = dW[:, k].copy()
            active = np.ones(n_paths, dtype=bool)
            while active.any():
                end = np.where(active, np.minimum(next_jump, t_next), t_cur)
                hs = end - t_cur
                jump = active & (next_jump <= t_next)
                span = t_next - t_cur
                split = jump & (span > 0)
                safe_span = np.where(split, span, 1.0)
                frac = np.where(split, hs / safe_span, 1.0)
                var = np.where(split, hs * (span - hs) / safe_span, 0.0)
                z = bridge[rows, nxt]
                dw = np.where(active, w_rem * frac + np.sqrt(np.maximum(var, 0.0)) * z, 0.0)
                w_rem = w_rem - dw
                X = X + hs[:, None] * np.einsum("pij,pj->pi", A[r], X) + dw[:, None] * np.einsum("pij,pj->pi", C[r], X)
                t_cur = end
                nxt = nxt + jump
                r = np.where(jump, chain_states[rows, nxt], r)
                next_jump = np.where(jump, jump_times[rows, np.minimum(nxt, max_jumps)], next_jump)
                active = jump
            if not np.all(np.isfinite(X)) or np.max(np.abs(X), initial=0.0) > OVERFLOW_LIMIT:
                raise SimulationDivergedError(t_next)
            states[:, k + 1], regimes[:, k + 1] = X, r
            controls[:, k + 1] = np.einsum("pij,pj->pi", self.gains[k + 1][r], X)

        return SampledPaths(times, states, controls, regimes, chains)


def _check_start(p: LQProblem, x, regime: int, t: float, T: float) -> np.ndarray:
    p.check_regime(regime)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (p.dims.n,):
        raise ProblemStructureError(f"initial state must have length {p.dims.n}, got {x.shape}", field="x")
    if not T > t:
        raise ProblemStructureError(f"horizon T={T} must exceed the start time t={t}", field="T")
    return x


def _batches(cfg: SimulationConfig) -> List[List[int]]:
    ids = list(range(int(cfg.n_paths)))
    return [ids[i:i + cfg.batch_size] for i in range(0, len(ids), cfg.batch_size)]


def path_costs(p: LQProblem, paths: SampledPaths, t: Optional[float] = None, T: Optional[float] = None) -> np.ndarray:
    """Per-path trapezoid integral of the stage cost over [t, T]."""
    times = paths.times
    t = float(times[0]) if t is None else t
    T = float(times[-1]) if T is None else T
    mask = (times >= t - 1e-12) & (times <= T + 1e-12)
    if mask.sum() < 2:
        return np.zeros(paths.states.shape[0])
    X, U, r = paths.states[:, mask], paths.controls[:, mask], paths.regimes[:, mask]
    Q, S, R = p.cost.Q[r], p.cost.S[r], p.cost.R[r]
    g = 0.5 * (
        np.einsum("pti,ptij,ptj->pt", X, Q, X)
        + 2.0 * np.einsum("pti,ptij,ptj->pt", U, S, X)
        + np.einsum("pti,ptij,ptj->pt", U, R, U)
    )
    return trapezoid(g, times[mask], axis=1)


def estimate_cost(p: LQProblem, paths: SampledPaths, t: Optional[float] = None,
                  T: Optional[float] = None) -> Tuple[float, float]:
    """Monte Carlo estimate of the cost over [t, T] with its standard error."""
    mean, se = mean_and_se(path_costs(p, paths, t, T))
    return float(mean), float(se)


def simulate_paths(p: LQProblem, gains, init: InitialTriple, horizon: float, cfg: SimulationConfig) -> SampledPaths:
    """All ``cfg.n_paths`` trajectories on the base grid (meant for small runs)."""
    x0 = _check_start(p, init.x, init.regime, init.t, horizon)
    engine = _Engine(p, gains, base_grid(init.t, horizon, cfg.dt))
    parts = ordered_map(lambda ids: engine.run(x0, init.regime, cfg.seed, ids), _batches(cfg))
    return SampledPaths(
        times=engine.times,
        states=np.concatenate([b.states for b in parts]),
        controls=np.concatenate([b.controls for b in parts]),
        regimes=np.concatenate([b.regimes for b in parts]),
        chains=[c for b in parts for c in b.chains],
    )


def simulate_closed_loop(p: LQProblem, gains, init: InitialTriple, horizon: float, cfg: SimulationConfig,
                         output_points: int = DEFAULT_OUTPUT_POINTS) -> PathStats:
    """Closed-loop u = Θ(s, α(s))X(s) statistics: E|X|², cost and regime occupation."""
    x0 = _check_start(p, init.x, init.regime, init.t, horizon)
    engine = _Engine(p, gains, base_grid(init.t, horizon, cfg.dt))
    idx = output_indices(len(engine.times) - 1, output_points)

    def batch(ids):
        paths = engine.run(x0, init.regime, cfg.seed, ids)
        sq = np.sum(paths.states[:, idx] ** 2, axis=-1)
        occupation = np.stack([c.occupation(p.dims.m0) for c in paths.chains])
        return sq, path_costs(p, paths), occupation

    parts = ordered_map(batch, _batches(cfg))
    sq = np.concatenate([b[0] for b in parts])
    costs = np.concatenate([b[1] for b in parts])
    occupation = np.concatenate([b[2] for b in parts]).mean(axis=0)
    mean_sq, mean_sq_se = mean_and_se(sq)
    cost, cost_se = mean_and_se(costs)
    logger.info("simulated %d paths of %s on [%g, %g] (%d steps)", cfg.n_paths, p.name, init.t, horizon,
                len(engine.times) - 1)
    return PathStats(
        times=engine.times[idx], mean_sq_state=mean_sq, mean_sq_state_se=mean_sq_se,
        mean_cost=float(cost), mean_cost_se=float(cost_se), occupation=occupation, n_paths=int(cfg.n_paths),
    )


def simulate_coupled(p: LQProblem, gains_T, gains_inf, xT, xInf, regime: int, t: float, T: float,
                     cfg: SimulationConfig, common_noise: bool = True,
                     output_points: int = DEFAULT_OUTPUT_POINTS) -> CoupledGapStats:
    """Gap between the finite- and infinite-horizon closed loops.

    With ``common_noise`` both loops are driven by the same Brownian path and
    the same chain path; otherwise the infinite-horizon loop gets independent
    streams (the baseline for the variance comparison).
    """
    xT = _check_start(p, xT, regime, t, T)
    xInf = _check_start(p, xInf, regime, t, T)
    times = base_grid(t, T, cfg.dt)
    engine_T = _Engine(p, gains_T, times)
    engine_inf = _Engine(p, gains_inf, times)
    idx = output_indices(len(times) - 1, output_points)
    offset = 0 if common_noise else STREAM_INDEPENDENT

    def batch(ids):
        a = engine_T.run(xT, regime, cfg.seed, ids)
        b = engine_inf.run(xInf, regime, cfg.seed, ids, stream_offset=offset)
        gx = np.sum((a.states[:, idx] - b.states[:, idx]) ** 2, axis=-1)
        gu = np.sum((a.controls[:, idx] - b.controls[:, idx]) ** 2, axis=-1)
        return gx, gu

    parts = ordered_map(batch, _batches(cfg))
    gx, gx_se = mean_and_se(np.concatenate([b[0] for b in parts]))
    gu, gu_se = mean_and_se(np.concatenate([b[1] for b in parts]))
    return CoupledGapStats(
        times=times[idx], gap_state=gx, gap_state_se=gx_se, gap_control=gu, gap_control_se=gu_se,
        n_paths=int(cfg.n_paths), common_noise=common_noise,
    )

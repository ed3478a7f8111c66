"""
Turnpike experiments: how fast the finite-horizon problem forgets its horizon.

Three families of checks are assembled into a :class:`TurnpikeReport`:

* Riccati and gain gaps ``P_∞ - P_T(t)`` and ``Θ_∞ - Θ_T(t)`` as functions of
  ``τ = T - t``, with fitted exponential rates;
* the state and control gaps between the finite- and infinite-horizon optimal
  closed loops started at ``(t, ι)``. These are exact expectations of a jointly
  linear system, computed from its second moment in the error coordinates
  ``Z = (X_T - X_∞; X_∞)``, and must be dominated by
  ``K e^{-δ(s-t)}|x_T - x_∞|² + K e^{-δ(s-t)} e^{-2δ(T-s)} |x_T|²``;
* the integrated gap over ``[0, T]`` for equal starts, which must shrink as
  ``T`` grows.
"""
import hashlib
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from switchlq import __version__
from switchlq.exceptions import ConfigError, FitError, SolverError, SwitchLQError
from switchlq.model import LQProblem
from switchlq.riccati import (
    DEFAULT_TOL, ARESolution, DRESolution, gain_lipschitz_constant, solve_are, solve_dre,
)
from switchlq.simulate import SimulationConfig, simulate_coupled
from switchlq.stability import initial_moment, propagate_second_moment
from switchlq.utils.export import ensure_dir, write_csv, write_json
from switchlq.utils.linalg import block_diag_family, eig_max, eig_min, op_norm
from switchlq.utils.runtime import ordered_map

logger = logging.getLogger(__name__)

GAP_KINDS = ("riccati_gap", "gain_gap", "state_gap", "control_gap", "integral_gap")
DEFAULT_WINDOW = (1e-10, 1e-1)
MIN_FIT_POINTS = 5
NEGATIVE_GAP_TOL = 1e-9
K_MAX = 1e4
DELTA_MIN = 1e-3
DELTA_GRID_POINTS = 64
# pointwise slack of the domination check, relative to |x_T - x_∞|² + |x_T|²
DOMINATION_FLOOR = 1e-12
# Monte Carlo weak error allowance per unit dt, relative to the series scale
MC_BIAS_COEF = 10.0


@dataclass(frozen=True, eq=False)
class GapSeries:
    """Nonnegative gap magnitudes on a strictly increasing abscissa.

    The abscissa is τ = T - t for riccati and gain gaps, the running time s
    for state and control gaps, and the horizon T for the integral gap.
    """

    abscissa: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in GAP_KINDS:
            raise ValueError(f"unknown gap kind {self.kind!r}")
        abscissa = np.asarray(self.abscissa, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if abscissa.shape != values.shape or abscissa.ndim != 1:
            raise ValueError("abscissa and values must be 1-D arrays of equal length")
        if np.any(np.diff(abscissa) <= 0):
            raise ValueError("abscissa must be strictly increasing")
        if np.any(values < 0):
            raise ValueError("gap values must be nonnegative")
        object.__setattr__(self, "abscissa", abscissa)
        object.__setattr__(self, "values", values)

    @property
    def abscissa_label(self) -> str:
        return {"riccati_gap": "tau", "gain_gap": "tau", "integral_gap": "T"}.get(self.kind, "s")

    def as_dict(self) -> dict:
        return {"kind": self.kind, "abscissa": self.abscissa, "values": self.values}


@dataclass(frozen=True)
class RateFit:
    """Log-linear fit value ≈ K_hat·exp(-delta_hat·abscissa) over ``window`` (abscissa range)."""

    K_hat: float
    delta_hat: float
    r_squared: float
    window: Tuple[float, float]
    n_points: int = 0

    def as_dict(self) -> dict:
        return {
            "K_hat": self.K_hat, "delta_hat": self.delta_hat, "r_squared": self.r_squared,
            "window": list(self.window), "n_points": self.n_points,
        }


@dataclass(frozen=True)
class BoundFit:
    """Dominating pair (K, δ) of a state or control gap series.

    ``dominates`` is False when no δ on the search grid admits K ≤ ``K_max``;
    ``K`` and ``delta`` then describe the smallest-δ attempt.
    """

    K: float
    delta: float
    dominates: bool
    floor: float
    K_max: float

    def as_dict(self) -> dict:
        return {"K": self.K, "delta": self.delta, "dominates": self.dominates, "floor": self.floor, "K_max": self.K_max}


@dataclass(frozen=True)
class Verdict:
    """Outcome of one check; ``series`` and ``fit`` name what it was computed from."""

    name: str
    passed: bool
    margin: float
    series: Tuple[str, ...] = ()
    fit: Optional[str] = None
    detail: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name, "passed": self.passed, "margin": self.margin,
            "series": list(self.series), "fit": self.fit, "detail": self.detail,
        }


@dataclass(frozen=True, eq=False)
class TurnpikeBound:
    """State and control gap series of one start, with their dominating pairs."""

    state: GapSeries
    control: GapSeries
    state_fit: BoundFit
    control_fit: BoundFit

    @property
    def passed(self) -> bool:
        return self.state_fit.dominates and self.control_fit.dominates


@dataclass(frozen=True)
class TurnpikeSettings:
    """Parameters of :func:`run_experiment`. ``x_inf`` defaults to ``x``, ``x`` to the all-ones vector."""

    T: float = 10.0
    grid_points: int = 201
    tol: float = DEFAULT_TOL
    x: Optional[Tuple[float, ...]] = None
    x_inf: Optional[Tuple[float, ...]] = None
    regime: int = 0
    t: float = 0.0
    T_list: Tuple[float, ...] = (6.0, 8.0, 10.0, 12.0)
    semigroup_pairs: Tuple[Tuple[float, float], ...] = ((5.0, 2.0), (8.0, 3.0))
    monotone_horizons: Tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    window: Tuple[float, float] = DEFAULT_WINDOW
    K_max: float = K_MAX
    newton: bool = True
    mc: Optional[SimulationConfig] = None
    mc_output_points: int = 51

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError(f"tolerance must be positive, got {self.tol}", field="tol")
        if not 0 <= self.t < self.T:
            raise ConfigError(f"need 0 <= t < T, got t={self.t}, T={self.T}", field="horizon")
        if int(self.grid_points) < 2:
            raise ConfigError(f"grid needs at least 2 points, got {self.grid_points}", field="grid")
        if any(not T > 0 for T in self.T_list):
            raise ConfigError("integral gap horizons must be positive", field="T_list")
        for T, t in self.semigroup_pairs:
            if not 0 <= t < T:
                raise ConfigError(f"semigroup pair needs 0 <= t < T, got ({T}, {t})", field="semigroup_pairs")

    def start(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        x = np.ones(n) if self.x is None else np.asarray(self.x, dtype=float)
        x_inf = x if self.x_inf is None else np.asarray(self.x_inf, dtype=float)
        if x.shape != (n,) or x_inf.shape != (n,):
            raise ConfigError(f"initial states must have length {n}", field="x0")
        return x, x_inf


@dataclass(frozen=True, eq=False)
class TurnpikeReport:
    problem_id: str
    are: dict
    series: Dict[str, GapSeries]
    fits: Dict[str, RateFit]
    bounds: Dict[str, BoundFit]
    verdicts: List[Verdict]
    provenance: dict
    monte_carlo: Optional[dict] = None

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def as_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "passed": self.passed,
            "are": self.are,
            "series": {k: s.as_dict() for k, s in self.series.items()},
            "fits": {k: f.as_dict() for k, f in self.fits.items()},
            "bounds": {k: b.as_dict() for k, b in self.bounds.items()},
            "verdicts": [v.as_dict() for v in self.verdicts],
            "provenance": self.provenance,
            "monte_carlo": self.monte_carlo,
        }


def fit_exponential_rate(series: GapSeries, window: Optional[Tuple[float, float]] = DEFAULT_WINDOW) -> RateFit:
    """Least squares of log(value) against the abscissa.

    Points with value ≤ 0, or outside the value range ``window`` (``None``
    keeps every positive point), are left out.
    """
    values, abscissa = series.values, series.abscissa
    usable = values > 0
    if window is not None:
        lo, hi = window
        usable &= (values >= lo) & (values <= hi)
    if np.count_nonzero(usable) < MIN_FIT_POINTS:
        raise FitError(
            f"{series.kind}: only {np.count_nonzero(usable)} usable points for a rate fit (need {MIN_FIT_POINTS})"
        )
    x = abscissa[usable]
    y = np.log(values[usable])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if total == 0 else float(np.clip(1.0 - np.sum(residual ** 2) / total, 0.0, 1.0))
    return RateFit(
        K_hat=float(math.exp(intercept)), delta_hat=float(-slope), r_squared=r_squared,
        window=(float(x[0]), float(x[-1])), n_points=int(x.size),
    )


def _clip_nonnegative(values: np.ndarray, scale: float, what: str) -> np.ndarray:
    worst = float(np.min(values)) if values.size else 0.0
    if worst < -NEGATIVE_GAP_TOL * max(1.0, scale):
        raise SolverError(f"{what} is negative ({worst:.3e})")
    return np.maximum(values, 0.0)


def _horizon_grid(T: float, grid) -> np.ndarray:
    grid = np.linspace(0.0, T, 201) if grid is None else np.asarray(grid, dtype=float)
    return grid


def _riccati_gap(are: ARESolution, dre: DRESolution) -> GapSeries:
    # P_T increases toward P_∞ as τ grows; a negative gap means the limit is not monotone
    diff = are.P[None] - dre.P
    gap = np.max(eig_max(diff), axis=-1)
    if float(np.min(gap)) < -NEGATIVE_GAP_TOL:
        raise SolverError(
            f"P_T(t) exceeds P_inf by {-float(np.min(gap)):.3e}; the monotone limit is violated"
        )
    tau = dre.horizon - dre.grid
    return GapSeries(tau[::-1], np.maximum(gap, 0.0)[::-1], "riccati_gap")


def _gain_gap(are: ARESolution, dre: DRESolution) -> GapSeries:
    gap = np.max(op_norm(are.theta[None] - dre.theta), axis=-1)
    tau = dre.horizon - dre.grid
    return GapSeries(tau[::-1], gap[::-1], "gain_gap")


def _solutions(p: LQProblem, T: float, grid, tol: float, are: Optional[ARESolution],
               dre: Optional[DRESolution]) -> Tuple[ARESolution, DRESolution]:
    are = solve_are(p, tol) if are is None else are
    dre = solve_dre(p, T, _horizon_grid(T, grid), tol) if dre is None else dre
    return are, dre


def riccati_gap_series(p: LQProblem, T: float, grid=None, tol: float = DEFAULT_TOL,
                       are: Optional[ARESolution] = None, dre: Optional[DRESolution] = None,
                       window: Optional[Tuple[float, float]] = DEFAULT_WINDOW) -> Tuple[GapSeries, RateFit]:
    """max_ι λ_max(P_∞(ι) - P_T(t, ι)) against τ = T - t, and its exponential fit."""
    are, dre = _solutions(p, T, grid, tol, are, dre)
    series = _riccati_gap(are, dre)
    return series, fit_exponential_rate(series, window)


def gain_gap_series(p: LQProblem, T: float, grid=None, tol: float = DEFAULT_TOL,
                    are: Optional[ARESolution] = None, dre: Optional[DRESolution] = None,
                    window: Optional[Tuple[float, float]] = DEFAULT_WINDOW) -> Tuple[GapSeries, RateFit]:
    """max_ι |Θ_∞(ι) - Θ_T(t, ι)| against τ = T - t, and its exponential fit."""
    are, dre = _solutions(p, T, grid, tol, are, dre)
    series = _gain_gap(are, dre)
    return series, fit_exponential_rate(series, window)


def joint_problem(p: LQProblem) -> LQProblem:
    """Two copies of ``p`` on one chain and one Brownian motion (state dimension 2n)."""
    c, w = p.coeffs, p.cost
    return LQProblem.from_matrices(
        A=block_diag_family(c.A, c.A), B=block_diag_family(c.B, c.B),
        C=block_diag_family(c.C, c.C), D=block_diag_family(c.D, c.D),
        Q=block_diag_family(w.Q, w.Q), R=block_diag_family(w.R, w.R), S=block_diag_family(w.S, w.S),
        generator=p.generator.rates, name=f"{p.name}-joint",
    )


def joint_gain(theta_T: np.ndarray, theta_inf: np.ndarray) -> np.ndarray:
    """Feedback of the joint system in error coordinates Z = (X_T - X_∞; X_∞).

    dE = A^{Θ_T}E + B(Θ_T - Θ_∞)X_∞ (drift, and likewise for the diffusion),
    so the gain is [[Θ_T, Θ_T - Θ_∞], [0, Θ_∞]].
    """
    top = np.concatenate([theta_T, theta_T - theta_inf], axis=-1)
    bottom = np.concatenate([np.zeros_like(theta_inf), theta_inf], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def joint_gaps(p: LQProblem, dre: DRESolution, theta_inf: np.ndarray, xT, xInf, regime: int,
               grid: np.ndarray, tol: float = DEFAULT_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """E|X_T(s) - X_∞(s)|² and E|u_T(s) - u_∞(s)|² on ``grid`` from the exact joint second moment."""
    n = p.dims.n
    joint = joint_problem(p)
    theta_inf = p.check_gain(theta_inf)

    def schedule(s):
        return joint_gain(dre.gain_at(s), theta_inf)

    z0 = np.concatenate([np.asarray(xT, dtype=float) - np.asarray(xInf, dtype=float), np.asarray(xInf, dtype=float)])
    Y0 = initial_moment(joint, z0, regime, float(grid[0]))
    moments = propagate_second_moment(joint, schedule, Y0, grid, tol)

    if float(np.min(eig_min(moments.Y))) < -NEGATIVE_GAP_TOL * max(1.0, float(np.max(np.abs(moments.Y)))):
        raise SolverError("joint second moment is not positive semidefinite")
    state = np.trace(moments.Y[..., :n, :n], axis1=-2, axis2=-1).sum(axis=-1)
    control = np.empty(len(grid))
    for k, s in enumerate(grid):
        theta_T = dre.gain_at(float(s))
        H = np.concatenate([theta_T, theta_T - theta_inf], axis=-1)
        control[k] = np.trace(H @ moments.Y[k] @ np.swapaxes(H, -1, -2), axis1=-2, axis2=-1).sum()
    scale = float(z0 @ z0)
    return (_clip_nonnegative(state, scale, "state gap"),
            _clip_nonnegative(control, scale * max(1.0, float(np.max(op_norm(theta_inf)))) ** 2, "control gap"))


def fit_domination(series: GapSeries, xT, xInf, t: float, T: float, decay_rate: float,
                   K_max: float = K_MAX) -> BoundFit:
    """Largest δ on a log grid in [1e-3, 2·decay_rate] whose minimal dominating K is at most ``K_max``."""
    d0 = float(np.sum((np.asarray(xT, dtype=float) - np.asarray(xInf, dtype=float)) ** 2))
    dT = float(np.sum(np.asarray(xT, dtype=float) ** 2))
    floor = DOMINATION_FLOOR * (d0 + dT)
    s = series.abscissa
    need = series.values - floor
    active = need > 0
    upper = max(2.0 * decay_rate, 2.0 * DELTA_MIN)
    deltas = np.geomspace(DELTA_MIN, upper, DELTA_GRID_POINTS)

    best = None
    first = None
    for delta in deltas:
        decay = np.exp(-delta * (s - t))
        basis = decay * d0 + decay * np.exp(-2.0 * delta * (T - s)) * dT
        if not np.any(active):
            K = 0.0
        elif np.any(basis[active] <= 0):
            K = math.inf
        else:
            K = float(np.max(need[active] / basis[active]))
        if first is None:
            first = (K, float(delta))
        if K <= K_max:
            best = (K, float(delta))
    if best is None:
        return BoundFit(K=first[0], delta=first[1], dominates=False, floor=floor, K_max=K_max)
    return BoundFit(K=best[0], delta=best[1], dominates=True, floor=floor, K_max=K_max)


def verify_turnpike_bound(p: LQProblem, xT, xInf, regime: int, t: float, T: float, grid=None,
                          tol: float = DEFAULT_TOL, are: Optional[ARESolution] = None,
                          dre: Optional[DRESolution] = None, K_max: float = K_MAX) -> TurnpikeBound:
    """State and control gaps of the optimal closed loops started at (t, ι), with dominating pairs.

    ``grid`` holds running times in [t, T] (default: 201 points).
    """
    if not 0 <= t < T:
        raise ConfigError(f"need 0 <= t < T, got t={t}, T={T}", field="horizon")
    regime = p.check_regime(regime)
    grid = np.linspace(t, T, 201) if grid is None else np.asarray(grid, dtype=float)
    if grid[0] != t or grid[-1] > T:
        raise ConfigError(f"running-time grid must start at t={t} and end by T={T}", field="grid")
    are = solve_are(p, tol) if are is None else are
    if dre is None or dre.horizon != T:
        dre = solve_dre(p, T, np.array([0.0, T]) if t == 0 else np.array([0.0, t, T]), tol)

    state, control = joint_gaps(p, dre, are.theta, xT, xInf, regime, grid, tol)
    state_series = GapSeries(grid, state, "state_gap")
    control_series = GapSeries(grid, control, "control_gap")
    decay = -are.closed_loop_rate
    bound = TurnpikeBound(
        state=state_series, control=control_series,
        state_fit=fit_domination(state_series, xT, xInf, t, T, decay, K_max),
        control_fit=fit_domination(control_series, xT, xInf, t, T, decay, K_max),
    )
    logger.info("turnpike bound %s on [%g, %g]: state %s, control %s", p.name, t, T,
                bound.state_fit.dominates, bound.control_fit.dominates)
    return bound


def integral_gap(p: LQProblem, x, regime: int, T_list: Sequence[float], tol: float = DEFAULT_TOL,
                 are: Optional[ARESolution] = None, points_per_unit: int = 50) -> GapSeries:
    """∫_0^T (E|X_T - X_∞|² + E|u_T - u_∞|²) ds for equal starts (0, x, ι), one value per T."""
    regime = p.check_regime(regime)
    horizons = np.asarray(sorted(float(T) for T in T_list))
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        return GapSeries(horizons, np.zeros(len(horizons)), "integral_gap")
    are = solve_are(p, tol) if are is None else are

    def one(T):
        grid = np.linspace(0.0, T, max(401, int(points_per_unit * T) + 1))
        dre = solve_dre(p, T, np.array([0.0, T]), tol)
        state, control = joint_gaps(p, dre, are.theta, x, x, regime, grid, tol)
        return float(trapezoid(state + control, grid))

    values = ordered_map(one, horizons)
    return GapSeries(horizons, np.array(values), "integral_gap")


def semigroup_check(p: LQProblem, T: float, t: float, tol: float = DEFAULT_TOL) -> float:
    """max_ι ‖P_T(t, ι) - P_{T-t}(0, ι)‖ from two independent DRE solves."""
    if not 0 <= t < T:
        raise ConfigError(f"need 0 <= t < T, got t={t}, T={T}", field="horizon")
    long = solve_dre(p, T, np.array([t, T]), tol)
    short = solve_dre(p, T - t, np.array([0.0, T - t]), tol)
    return float(np.max(op_norm(long.P[0] - short.P[0])))


def _monotone_limit(p: LQProblem, are: ARESolution, horizons: Sequence[float], tol: float) -> Tuple[float, str]:
    horizons = sorted(float(T) for T in horizons)
    values = ordered_map(lambda T: solve_dre(p, T, np.array([0.0, T]), tol).P[0], horizons)
    eye = np.eye(p.dims.n)
    margin = math.inf
    for lower, upper in zip(values, values[1:] + [are.P + 1e-9 * eye]):
        margin = min(margin, float(np.min(eig_min(upper - lower))))
    return margin, f"P_T(0) for T in {horizons} ordered below P_inf + 1e-9 I"


def _mc_cross_check(p: LQProblem, settings: TurnpikeSettings, are: ARESolution, dre: DRESolution,
                    xT: np.ndarray, xInf: np.ndarray) -> Tuple[dict, Verdict]:
    cfg = settings.mc
    stats = simulate_coupled(p, dre, are.theta, xT, xInf, settings.regime, settings.t, settings.T, cfg,
                             output_points=settings.mc_output_points)
    state, control = joint_gaps(p, dre, are.theta, xT, xInf, settings.regime, stats.times, settings.tol)
    margin = math.inf
    used_bias = False
    for mc, se, exact in ((stats.gap_state, stats.gap_state_se, state),
                          (stats.gap_control, stats.gap_control_se, control)):
        bias = MC_BIAS_COEF * cfg.dt * float(np.max(exact))
        excess = np.abs(mc - exact) - 3.0 * se
        used_bias |= bool(np.any(excess > 0))
        margin = min(margin, float(np.min(bias - excess)))
    if used_bias:
        logger.warning("Monte Carlo agreement for %s relies on the O(dt) bias allowance", p.name)
    document = {
        "times": stats.times, "n_paths": stats.n_paths, "dt": cfg.dt, "seed": cfg.seed,
        "state_mc": stats.gap_state, "state_se": stats.gap_state_se, "state_exact": state,
        "control_mc": stats.gap_control, "control_se": stats.gap_control_se, "control_exact": control,
    }
    verdict = Verdict("monte_carlo_agreement", margin >= 0, margin, ("state_gap", "control_gap"),
                      detail="|MC - exact| <= 3 SE + O(dt) bias at every output time")
    return document, verdict


def run_experiment(p: LQProblem, settings: Optional[TurnpikeSettings] = None) -> TurnpikeReport:
    """Run every turnpike check on ``p`` and assemble the report.

    Only the ARE stage may raise; later failures become failing verdicts.
    """
    settings = TurnpikeSettings() if settings is None else settings
    tol = settings.tol
    regime = p.check_regime(settings.regime)
    xT, xInf = settings.start(p.dims.n)
    are = solve_are(p, tol, newton=settings.newton)
    decay = -are.closed_loop_rate
    grid = np.linspace(0.0, settings.T, settings.grid_points)
    if settings.t > 0:
        grid = np.union1d(grid, [settings.t])
    dre = solve_dre(p, settings.T, grid, tol)

    series: Dict[str, GapSeries] = {}
    fits: Dict[str, RateFit] = {}
    bounds: Dict[str, BoundFit] = {}
    verdicts: List[Verdict] = []

    discrepancies = ordered_map(lambda pair: semigroup_check(p, pair[0], pair[1], tol), settings.semigroup_pairs)
    for (T, t), disc in zip(settings.semigroup_pairs, discrepancies):
        verdicts.append(Verdict(f"semigroup_T{T:g}_t{t:g}", disc <= 10 * tol, 10 * tol - disc,
                                detail=f"|P_T(t) - P_(T-t)(0)| = {disc:.3e}"))

    margin, detail = _monotone_limit(p, are, settings.monotone_horizons, tol)
    verdicts.append(Verdict("monotone_limit", margin >= 0, margin, detail=detail))

    try:
        series["riccati_gap"] = _riccati_gap(are, dre)
        series["gain_gap"] = _gain_gap(are, dre)
    except SolverError as exc:
        verdicts.append(Verdict("riccati_gap_nonnegative", False, -math.inf, ("riccati_gap",), detail=str(exc)))
    else:
        riccati, gain = series["riccati_gap"], series["gain_gap"]
        steps = np.diff(riccati.values)
        verdicts.append(Verdict("riccati_gap_monotone", bool(np.all(steps <= 10 * tol)),
                                float(10 * tol - np.max(steps, initial=0.0)), ("riccati_gap",)))
        for kind in ("riccati_gap", "gain_gap"):
            try:
                fit = fits[kind] = fit_exponential_rate(series[kind], settings.window)
            except FitError as exc:
                verdicts.append(Verdict(f"{kind}_exponential", False, -math.inf, (kind,), detail=str(exc)))
                continue
            verdicts.append(Verdict(f"{kind}_exponential", fit.delta_hat > 0, fit.delta_hat, (kind,), kind,
                                    detail=f"delta_hat={fit.delta_hat:.6g}, r_squared={fit.r_squared:.6g}"))

        delta_reg = min(dre.delta_margin, are.delta_margin)
        c = gain_lipschitz_constant(p, are.P, delta_reg)
        allowance = c * riccati.values * (1 + 1e-9) + 1e-12
        verdicts.append(Verdict("gain_lipschitz", bool(np.all(gain.values <= allowance)),
                                float(np.min(allowance - gain.values)), ("riccati_gap", "gain_gap"),
                                detail=f"c={c:.6g}"))
        if "riccati_gap" in fits:
            rate = fits["riccati_gap"].delta_hat
            verdicts.append(Verdict("rate_ordering", rate <= 1.1 * decay, 1.1 * decay - rate, ("riccati_gap",),
                                    "riccati_gap", detail=f"delta_hat={rate:.6g}, moment decay rate={decay:.6g}"))

    bound_grid = grid[grid >= settings.t]
    try:
        bound = verify_turnpike_bound(p, xT, xInf, regime, settings.t, settings.T, bound_grid, tol,
                                      are=are, dre=dre, K_max=settings.K_max)
    except SwitchLQError as exc:
        verdicts.append(Verdict("turnpike_bound", False, -math.inf, ("state_gap", "control_gap"), detail=str(exc)))
    else:
        series["state_gap"], series["control_gap"] = bound.state, bound.control
        bounds["state_gap"], bounds["control_gap"] = bound.state_fit, bound.control_fit
        for kind, fit in bounds.items():
            verdicts.append(Verdict(f"{kind}_dominated", fit.dominates, settings.K_max - fit.K, (kind,), kind,
                                    detail=f"K={fit.K:.6g}, delta={fit.delta:.6g}"))

    try:
        integral = series["integral_gap"] = integral_gap(p, xT, regime, settings.T_list, tol, are=are)
    except SwitchLQError as exc:
        verdicts.append(Verdict("integral_gap_decreasing", False, -math.inf, ("integral_gap",), detail=str(exc)))
    else:
        steps = np.diff(integral.values)
        verdicts.append(Verdict("integral_gap_decreasing", bool(np.all(steps <= 1e-12)),
                                float(1e-12 - np.max(steps, initial=0.0)), ("integral_gap",)))

    monte_carlo = None
    if settings.mc is not None:
        try:
            monte_carlo, verdict = _mc_cross_check(p, settings, are, dre, xT, xInf)
        except SwitchLQError as exc:
            verdict = Verdict("monte_carlo_agreement", False, -math.inf, ("state_gap", "control_gap"), detail=str(exc))
        verdicts.append(verdict)

    provenance = {
        "version": __version__,
        "tol": tol,
        "T": settings.T,
        "t": settings.t,
        "regime": regime + 1,
        "x": xT,
        "x_inf": xInf,
        "grid_points": settings.grid_points,
        "T_list": list(settings.T_list),
        "window": list(settings.window),
        "K_max": settings.K_max,
        "newton": settings.newton,
        "seed": None if settings.mc is None else settings.mc.seed,
        "n_paths": None if settings.mc is None else settings.mc.n_paths,
        "dt": None if settings.mc is None else settings.mc.dt,
    }
    report = TurnpikeReport(
        problem_id=p.name, are=are.summary(), series=series, fits=fits, bounds=bounds,
        verdicts=verdicts, provenance=provenance, monte_carlo=monte_carlo,
    )
    failed = [v.name for v in verdicts if not v.passed]
    if failed:
        logger.warning("turnpike checks failed for %s: %s", p.name, ", ".join(failed))
    else:
        logger.info("all %d turnpike checks passed for %s", len(verdicts), p.name)
    return report


def report_stem(problem_id: str, config_bytes: bytes) -> str:
    """``<problem id>-<first 12 hex digits of sha256(config)>``."""
    safe = re.sub(r"[^A-Za-z0-9._-]+", "_", problem_id) or "problem"
    return f"{safe}-{hashlib.sha256(config_bytes).hexdigest()[:12]}"


def write_report(report: TurnpikeReport, out_dir: str, config_bytes: bytes) -> List[str]:
    """JSON report plus one CSV per series; returns the written paths."""
    ensure_dir(out_dir)
    stem = report_stem(report.problem_id, config_bytes)
    paths = [write_json(os.path.join(out_dir, f"{stem}-report.json"), report.as_dict())]
    for kind, gap in report.series.items():
        paths.append(write_csv(
            os.path.join(out_dir, f"{stem}-{kind}.csv"), [gap.abscissa_label, "value"],
            zip(gap.abscissa, gap.values),
        ))
    if report.monte_carlo is not None:
        mc = report.monte_carlo
        paths.append(write_csv(
            os.path.join(out_dir, f"{stem}-monte_carlo.csv"),
            ["s", "state_mc", "state_se", "state_exact", "control_mc", "control_se", "control_exact"],
            zip(mc["times"], mc["state_mc"], mc["state_se"], mc["state_exact"],
                mc["control_mc"], mc["control_se"], mc["control_exact"]),
        ))
    logger.info("turnpike report for %s written to %s (%d files)", report.problem_id, out_dir, len(paths))
    return paths

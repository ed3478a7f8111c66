"""
Coupled Riccati equations of the switching LQ problem.

The finite-horizon family P_T(t, ι) solves the differential Riccati equation
backward from P_T(T) = 0; the algebraic solution P_∞ is reached as its
stationary limit (optionally polished by Newton steps). Both are integrated
in the reversed time τ = T - t, in which the flow is autonomous:

    dP/dτ = F(P) = Λ[P] + PA + AᵀP + CᵀPC + Q
                   - (PB + CᵀPD + Sᵀ)(R + DᵀPD)⁻¹(BᵀP + DᵀPC + S).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from switchlq import stability
from switchlq.exceptions import (
    HorizonCapError, NotStabilizingError, ProblemStructureError, RegularityLossError,
    SingularMatrixError, SolverError, StepSizeUnderflowError,
)
from switchlq.markov import lambda_apply
from switchlq.model import LQProblem, validate_problem
from switchlq.utils.integrate import DormandPrince54, Trajectory
from switchlq.utils.linalg import eig_max, eig_min, op_norm, project_psd, symmetrize

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
T_MAX_CAP = 1e4
# P or residual beyond this growth means the flow is not settling
DIVERGENCE_LIMIT = 1e12
# a capped flow within this factor of tol is close enough for Newton to finish
NEWTON_HANDOFF = 1e4


def _transpose(M: np.ndarray) -> np.ndarray:
    return np.swapaxes(M, -1, -2)


def _check_family(p: LQProblem, P) -> np.ndarray:
    return p.check_family(P, p.dims.n, p.dims.n, "P")


def _regular_parts(p: LQProblem, P: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(R + DᵀPD, BᵀP + DᵀPC + S), checking invertibility per regime."""
    B, C, D = p.coeffs.B, p.coeffs.C, p.coeffs.D
    Dt = _transpose(D)
    inner = symmetrize(p.cost.R + Dt @ P @ D)
    N = _transpose(B) @ P + Dt @ P @ C + p.cost.S
    w = np.linalg.eigvalsh(inner)
    for regime, eigs in enumerate(w):
        smallest = eigs[np.argmin(np.abs(eigs))]
        if abs(smallest) <= 1e-13 * max(1.0, float(np.max(np.abs(eigs)))):
            raise SingularMatrixError("R + D'PD", regime, float(smallest))
    return inner, N


def gain_from_P(p: LQProblem, P) -> np.ndarray:
    """Feedback gain Θ(ι) = -(R + DᵀPD)⁻¹(BᵀP + DᵀPC + S)(ι)."""
    P = _check_family(p, P)
    inner, N = _regular_parts(p, P)
    return -np.linalg.solve(inner, N)


def are_residual(p: LQProblem, P) -> np.ndarray:
    """Left-hand side F(P) of the algebraic Riccati equation, per regime."""
    P = _check_family(p, P)
    A, C = p.coeffs.A, p.coeffs.C
    inner, N = _regular_parts(p, P)
    linear = lambda_apply(p.generator, P) + P @ A + _transpose(A) @ P + _transpose(C) @ P @ C + p.cost.Q
    return symmetrize(linear - _transpose(N) @ np.linalg.solve(inner, N))


def dre_rhs(p: LQProblem, P) -> np.ndarray:
    """Time derivative Ṗ of the differential Riccati equation, i.e. -F(P)."""
    return -are_residual(p, P)


def residual_norm(F: np.ndarray) -> float:
    """Largest per-regime Frobenius norm."""
    return float(np.max(np.linalg.norm(F, axis=(-2, -1))))


def regularity_margin(p: LQProblem, P) -> np.ndarray:
    """Per-regime λ_min(R + DᵀPD)."""
    D = p.coeffs.D
    return eig_min(p.cost.R + _transpose(D) @ P @ D)


def value_function(P, x, regime: int) -> float:
    """½ xᵀP(ι)x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    M = np.asarray(P, dtype=float)[regime]
    if M.shape != (x.size, x.size):
        raise ProblemStructureError(f"state of length {x.size} does not match P of shape {M.shape}", field="x")
    return 0.5 * float(x @ M @ x)


@dataclass(frozen=True, eq=False)
class DRESolution:
    """P_T(t, ι) and Θ_T(t, ι) on an output grid, with dense evaluation in between.

    Arrays are indexed ``[grid point, regime, row, col]``.
    """

    grid: np.ndarray
    P: np.ndarray
    theta: np.ndarray
    Pdot: np.ndarray
    delta_margin: float
    horizon: float
    tol: float
    monotone: bool
    problem: LQProblem = field(repr=False)
    trajectory: Trajectory = field(repr=False)

    def P_at(self, t: float) -> np.ndarray:
        """Dense P_T(t, ·) from the solver's Hermite interpolant."""
        if not -1e-12 <= t <= self.horizon + 1e-12:
            raise ProblemStructureError(f"time {t} outside [0, {self.horizon}]", field="t")
        tau = min(max(self.horizon - t, 0.0), self.horizon)
        return self.trajectory.evaluate(tau)[0]

    def gain_at(self, t: float) -> np.ndarray:
        """Θ_T(t, ·), usable as a gain schedule."""
        return gain_from_P(self.problem, self.P_at(t))

    def __call__(self, t: float) -> np.ndarray:
        return self.gain_at(t)


@dataclass(frozen=True, eq=False)
class ARESolution:
    """Stationary pair (P_∞, Θ_∞) with its certificates."""

    P: np.ndarray
    theta: np.ndarray
    residual_norm: float
    delta_margin: float
    closed_loop_rate: float
    horizon_used: float
    newton_iterations: int = 0
    residual_history: List[float] = field(default_factory=list)

    def gains(self):
        """Constant gain schedule Θ_∞."""
        from switchlq.model import constant_gains
        return constant_gains(self.theta)

    def summary(self) -> dict:
        return {
            "P": self.P,
            "theta": self.theta,
            "residual_norm": self.residual_norm,
            "delta_margin": self.delta_margin,
            "closed_loop_rate": self.closed_loop_rate,
            "horizon_used": self.horizon_used,
            "newton_iterations": self.newton_iterations,
            "min_eig_P": float(np.min(eig_min(self.P))),
        }


def _warn_if_invalid(p: LQProblem) -> None:
    report = validate_problem(p)
    if not report.ok:
        logger.warning("%s does not satisfy the standing assumptions: %s", p.name, "; ".join(report.messages))


def _riccati_integrator(p: LQProblem, tol: float, horizon: float, margins: list) -> DormandPrince54:
    def fun(tau, P):
        return are_residual(p, P)

    def post_step(tau, P):
        P = project_psd(P)
        margin = regularity_margin(p, P)
        worst = int(np.argmin(margin))
        if margin[worst] <= 0:
            raise RegularityLossError(horizon - tau, worst, float(margin[worst]))
        margins.append(float(margin[worst]))
        return P

    return DormandPrince54(fun, tol, post_step=post_step)


def solve_dre(p: LQProblem, T: float, out_grid=None, tol: float = DEFAULT_TOL) -> DRESolution:
    """Integrate the differential Riccati equation backward from P_T(T) = 0.

    Every point of ``out_grid`` (default: 101 equispaced points on [0, T]) is
    an accepted solver node; monotonicity in t is checked afterwards.
    """
    if not T > 0:
        raise ProblemStructureError(f"horizon must be positive, got {T}", field="T")
    if not tol > 0:
        raise ProblemStructureError(f"tolerance must be positive, got {tol}", field="tol")
    grid = np.linspace(0.0, T, 101) if out_grid is None else np.asarray(out_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ProblemStructureError("output grid must be a strictly increasing 1-D array", field="out_grid")
    if grid[0] < 0 or grid[-1] > T:
        raise ProblemStructureError(f"output grid must lie in [0, {T}]", field="out_grid")
    _warn_if_invalid(p)

    n, m0 = p.dims.n, p.dims.m0
    margins = [float(np.min(regularity_margin(p, np.zeros((m0, n, n)))))]
    integrator = _riccati_integrator(p, tol, T, margins)
    try:
        trajectory = integrator.integrate(0.0, np.zeros((m0, n, n)), T, knots=T - grid)
    except StepSizeUnderflowError as exc:
        raise StepSizeUnderflowError(T - exc.time, exc.step) from None

    P = trajectory.evaluate(T - grid)
    P[grid == T] = 0.0
    P = project_psd(P)
    theta = np.stack([gain_from_P(p, Pk) for Pk in P])
    Pdot = np.stack([dre_rhs(p, Pk) for Pk in P])
    delta_margin = min(min(margins), float(np.min(regularity_margin(p, P))))

    # P_T(t) is nonincreasing in t
    slack = 10.0 * tol * max(1.0, float(np.max(np.abs(P))))
    steps = P[:-1] - P[1:]
    monotone = bool(steps.shape[0] == 0 or np.min(eig_min(steps)) >= -slack)
    if not monotone:
        logger.warning("P_T(t) not certified monotone on the output grid of %s (T=%g)", p.name, T)

    logger.info("DRE %s: T=%g, %d steps, delta margin %.6g", p.name, T, len(trajectory.t) - 1, delta_margin)
    return DRESolution(
        grid=grid, P=P, theta=theta, Pdot=Pdot, delta_margin=delta_margin, horizon=float(T),
        tol=tol, monotone=monotone, problem=p, trajectory=trajectory,
    )


def newton_refine(p: LQProblem, P, tol: float = DEFAULT_TOL, max_iter: int = 20) -> Tuple[np.ndarray, List[float]]:
    """Newton iteration on F(P) = 0 started from ``P``.

    The derivative of F at P is the closed-loop operator
    H ↦ Λ[H] + HA^Θ + (A^Θ)ᵀH + (C^Θ)ᵀHC^Θ with Θ = gain_from_P(P), so each
    step solves one coupled Lyapunov equation. Steps that do not reduce the
    residual are rejected, which makes the residual history decreasing.
    """
    P = symmetrize(_check_family(p, P))
    history = [residual_norm(are_residual(p, P))]
    for _ in range(max_iter):
        if history[-1] <= 1e-3 * tol:
            break
        theta = gain_from_P(p, P)
        try:
            H = stability.solve_coupled_lyapunov(p, theta, are_residual(p, P))
        except SolverError as exc:
            logger.warning("Newton step failed: %s", exc)
            break
        candidate = symmetrize(P + H)
        try:
            residual = residual_norm(are_residual(p, candidate))
        except SingularMatrixError:
            break
        if not residual < history[-1]:
            logger.debug("Newton step rejected (residual %.3e >= %.3e)", residual, history[-1])
            break
        P = candidate
        history.append(residual)
    return P, history


def solve_are(p: LQProblem, tol: float = DEFAULT_TOL, t_max: Optional[float] = None,
              newton: bool = True) -> ARESolution:
    """Stationary solution of the Riccati flow.

    The DRE is integrated backward from zero until the residual and the
    step-to-step change are both at most ``tol``. Without an explicit
    ``t_max``, the cap is 50/ρ̂ (ρ̂ estimated from the first tenfold drop of
    the residual), at most 1e4. With ``newton``, a flow capped within
    ``NEWTON_HANDOFF * tol`` is finished by Newton steps. The gain must be
    mean-square stabilizing.
    """
    if not tol > 0:
        raise ProblemStructureError(f"tolerance must be positive, got {tol}", field="tol")
    _warn_if_invalid(p)
    n, m0 = p.dims.n, p.dims.m0
    P0 = np.zeros((m0, n, n))
    r0 = residual_norm(are_residual(p, P0))
    state = {"cap": T_MAX_CAP if t_max is None else float(t_max), "capped": False, "residual": r0}

    def stop(tau, P, F, P_prev, h):
        res = residual_norm(F)
        state["residual"] = res
        if t_max is None and state["cap"] == T_MAX_CAP and res <= 0.1 * r0 and tau > 0:
            rate = math.log(10.0) / tau
            state["cap"] = min(50.0 / rate, T_MAX_CAP)
            logger.debug("ARE horizon cap set to %.6g (rate estimate %.3g)", state["cap"], rate)
        if res > DIVERGENCE_LIMIT * max(1.0, r0) or np.max(np.abs(P)) > DIVERGENCE_LIMIT:
            raise HorizonCapError(tau, res)
        change = float(np.max(np.linalg.norm(P - P_prev, axis=(-2, -1))))
        if res <= tol and change <= tol:
            return True
        if tau >= state["cap"]:
            state["capped"] = True
            return True
        return False

    margins: list = []
    integrator = _riccati_integrator(p, tol, 0.0, margins)
    t_end = state["cap"] if t_max is not None else T_MAX_CAP
    try:
        trajectory = integrator.integrate(0.0, P0, t_end, stop=stop)
    except StepSizeUnderflowError as exc:
        raise HorizonCapError(exc.time, state["residual"]) from None
    except RegularityLossError as exc:
        raise RegularityLossError(-exc.time, exc.regime, exc.margin) from None

    P = trajectory.y_final
    tau_used = trajectory.t_final
    history = [residual_norm(are_residual(p, P))]
    if not trajectory.stopped or state["capped"]:
        if history[-1] > (NEWTON_HANDOFF * tol if newton else tol):
            raise HorizonCapError(tau_used, history[-1])
        logger.info("ARE %s: flow capped at tau=%.6g, residual %.3e", p.name, tau_used, history[-1])
    else:
        logger.info("ARE %s: flow stationary at tau=%.6g, residual %.3e", p.name, tau_used, history[-1])

    iterations = 0
    if newton:
        P, history = newton_refine(p, P, tol)
        iterations = len(history) - 1
        logger.info("ARE %s: %d Newton steps, residual %.3e", p.name, iterations, history[-1])

    residual = history[-1]
    if residual > tol:
        raise HorizonCapError(tau_used, residual)
    theta = gain_from_P(p, P)
    rate = stability.moment_spectral_abscissa(p, theta)
    if rate >= 0:
        raise NotStabilizingError(rate)
    return ARESolution(
        P=P, theta=theta, residual_norm=residual,
        delta_margin=float(np.min(regularity_margin(p, P))),
        closed_loop_rate=rate, horizon_used=tau_used,
        newton_iterations=iterations, residual_history=history,
    )


def gain_lipschitz_constant(p: LQProblem, P_inf, delta: float) -> float:
    """Constant c with |Θ_∞(ι) - Θ_T(t, ι)| ≤ c‖P_∞(ι) - P_T(t, ι)‖ whenever 0 ⪯ P_T ⪯ P_∞.

    With ΔP = P_∞ - P_T, Θ_∞ - Θ_T = -R̂_∞⁻¹(BᵀΔP + DᵀΔPC) + R̂_T⁻¹(DᵀΔPD)R̂_∞⁻¹N_T, and
    both regularized weights R̂ are bounded below by ``delta``.
    """
    if not delta > 0:
        raise ProblemStructureError(f"regularity margin must be positive, got {delta}", field="delta")
    B, C, D, S = p.coeffs.B, p.coeffs.C, p.coeffs.D, p.cost.S
    nB, nC, nD, nS = op_norm(B), op_norm(C), op_norm(D), op_norm(S)
    nP = eig_max(np.asarray(P_inf, dtype=float))
    c = (nB + nD * nC) / delta + nD ** 2 * (nB * nP + nD * nP * nC + nS) / delta ** 2
    return float(np.max(c))

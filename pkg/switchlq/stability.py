"""
Mean-square stability of switched closed loops.

Two dual linear maps on per-regime symmetric families drive everything here.
The quadratic generator

    G_Θ(Σ)(ι) = Λ[Σ](ι) + Σ(ι)A^Θ(ι) + A^Θ(ι)ᵀΣ(ι) + C^Θ(ι)ᵀΣ(ι)C^Θ(ι)

gives d/ds E⟨Σ(α)X, X⟩ = E⟨G_Θ(Σ)(α)X, X⟩ along the closed loop, and its
adjoint

    M_Θ(Y)(ι) = A^Θ(ι)Y(ι) + Y(ι)A^Θ(ι)ᵀ + C^Θ(ι)Y(ι)C^Θ(ι)ᵀ + Σ_ȷ λ_ȷι Y(ȷ)

propagates Y(ι) = E[XXᵀ 1{α = ι}] exactly. The closed loop is mean-square
stable iff the spectral abscissa of M_Θ is negative.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la

from switchlq.exceptions import CertificateError, NotStabilizingError, SolverError
from switchlq.markov import lambda_adjoint_apply, lambda_apply
from switchlq.model import (
    LQProblem, apply_feedback_shift, as_gain_schedule, closed_loop, zero_gain,
)
from switchlq.utils.integrate import DormandPrince54
from switchlq.utils.linalg import (
    eig_max, eig_min, operator_matrix, project_psd, smat, spectral_abscissa, svec, symmetrize,
)

logger = logging.getLogger(__name__)

DISSIPATIVITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DissipativityCertificate:
    """Family Σ ≻ 0 and rate δ claimed to satisfy G_Θ(Σ) + δΣ ⪯ 0.

    ``slack`` holds the per-regime λ_min of -(G_Θ(Σ) + δΣ) once checked.
    """

    sigma: np.ndarray
    delta: float
    slack: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class DissipativityVerdict:
    valid: bool
    slack: np.ndarray


@dataclass(frozen=True, eq=False)
class SecondMomentState:
    """Per-regime second moments Y(ι) = E[X(t)X(t)ᵀ 1{α(t) = ι}] at time t."""

    Y: np.ndarray
    t: float = 0.0

    @property
    def mean_square(self) -> float:
        """E|X(t)|² = Σ_ι tr Y(ι)."""
        return float(np.trace(self.Y, axis1=-2, axis2=-1).sum())


@dataclass(frozen=True, eq=False)
class MomentTrajectory:
    """Second moments on an output grid; ``Y`` is indexed [time, regime, row, col]."""

    times: np.ndarray
    Y: np.ndarray
    mean_square: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mean_square", np.trace(self.Y, axis1=-2, axis2=-1).sum(axis=-1))

    def states(self):
        return [SecondMomentState(Y, float(t)) for t, Y in zip(self.times, self.Y)]


def initial_moment(p: LQProblem, x, regime: int, t: float = 0.0) -> SecondMomentState:
    """Second moment of a deterministic start (x, ι)."""
    regime = p.check_regime(regime)
    x = np.asarray(x, dtype=float).reshape(-1)
    Y = np.zeros((p.dims.m0, x.size, x.size))
    Y[regime] = np.outer(x, x)
    return SecondMomentState(Y, t)


def _theta_or_zero(p: LQProblem, theta) -> np.ndarray:
    return zero_gain(p) if theta is None else p.check_gain(theta)


def quadratic_generator(p: LQProblem, theta, sigma) -> np.ndarray:
    """G_Θ(Σ): the matrix whose quadratic form is d/ds E⟨Σ(α)X, X⟩ for the closed loop."""
    A, C = closed_loop(p, _theta_or_zero(p, theta))
    sigma = p.check_family(sigma, p.dims.n, p.dims.n, "sigma")
    At, Ct = np.swapaxes(A, -1, -2), np.swapaxes(C, -1, -2)
    return symmetrize(lambda_apply(p.generator, sigma) + sigma @ A + At @ sigma + Ct @ sigma @ C)


def moment_rhs(p: LQProblem, theta, Y) -> np.ndarray:
    """Ẏ(ι) = A^ΘY(ι) + Y(ι)A^Θᵀ + C^ΘY(ι)C^Θᵀ + Σ_ȷ λ_ȷι Y(ȷ)."""
    if isinstance(Y, SecondMomentState):
        Y = Y.Y
    A, C = closed_loop(p, _theta_or_zero(p, theta))
    Y = p.check_family(Y, p.dims.n, p.dims.n, "Y")
    At, Ct = np.swapaxes(A, -1, -2), np.swapaxes(C, -1, -2)
    return symmetrize(A @ Y + Y @ At + C @ Y @ Ct + lambda_adjoint_apply(p.generator, Y))


def moment_operator(p: LQProblem, theta) -> np.ndarray:
    """Matrix of M_Θ on the m0·n(n+1)/2-dimensional symmetric space."""
    theta = _theta_or_zero(p, theta)
    return operator_matrix(lambda Y: moment_rhs(p, theta, Y), p.dims.m0, p.dims.n)


def moment_spectral_abscissa(p: LQProblem, theta) -> float:
    """Largest real part of the spectrum of M_Θ (negative iff mean-square stable)."""
    try:
        return spectral_abscissa(moment_operator(p, theta))
    except (la.LinAlgError, ValueError) as exc:
        raise SolverError(f"eigenvalue computation failed: {exc}") from None


def check_dissipativity(p: LQProblem, theta, cert: DissipativityCertificate) -> DissipativityVerdict:
    """Evaluate G_Θ(Σ) + δΣ ⪯ 0 regime by regime (``theta=None`` means no feedback)."""
    sigma = p.check_family(cert.sigma, p.dims.n, p.dims.n, "sigma")
    if np.min(eig_min(sigma)) <= 0:
        raise CertificateError("certificate family sigma must be positive definite in every regime")
    lhs = quadratic_generator(p, theta, sigma) + cert.delta * sigma
    slack = -eig_max(lhs)
    return DissipativityVerdict(valid=bool(np.all(slack >= -DISSIPATIVITY_TOL)), slack=slack)


def solve_coupled_lyapunov(p: LQProblem, theta, rhs) -> np.ndarray:
    """Σ with G_Θ(Σ) = -rhs in every regime."""
    theta = _theta_or_zero(p, theta)
    n, m0 = p.dims.n, p.dims.m0
    rhs = p.check_family(rhs, n, n, "rhs")
    M = operator_matrix(lambda S: quadratic_generator(p, theta, S), m0, n)
    try:
        solution = la.solve(M, -svec(symmetrize(rhs)))
    except la.LinAlgError as exc:
        raise SolverError(f"coupled Lyapunov operator is singular: {exc}") from None
    return smat(solution, m0, n)


def certify_stabilizer(p: LQProblem, theta) -> DissipativityCertificate:
    """Dissipativity certificate for a stabilizing gain.

    Σ solves G_Θ(Σ) = -I, so G_Θ(Σ) + δΣ ⪯ 0 for δ = 1 / max_ι λ_max(Σ(ι)).
    """
    theta = _theta_or_zero(p, theta)
    rate = moment_spectral_abscissa(p, theta)
    if rate >= 0:
        raise NotStabilizingError(rate)
    identity = np.broadcast_to(np.eye(p.dims.n), (p.dims.m0, p.dims.n, p.dims.n))
    sigma = solve_coupled_lyapunov(p, theta, identity)
    delta = 1.0 / float(np.max(eig_max(sigma)))
    verdict = check_dissipativity(p, theta, DissipativityCertificate(sigma, delta))
    return DissipativityCertificate(sigma=sigma, delta=delta, slack=verdict.slack)


def closed_loop_cost(p: LQProblem, theta, x, regime: int) -> float:
    """Infinite-horizon cost of the stationary feedback u = Θ(α)X from (x, ι)."""
    theta = p.check_gain(theta)
    rate = moment_spectral_abscissa(p, theta)
    if rate >= 0:
        raise NotStabilizingError(rate)
    shifted = apply_feedback_shift(p, theta)
    Pi = solve_coupled_lyapunov(shifted, None, shifted.cost.Q)
    x = np.asarray(x, dtype=float).reshape(-1)
    return 0.5 * float(x @ Pi[p.check_regime(regime)] @ x)


def propagate_second_moment(p: LQProblem, gains, Y0, grid, tol: float = 1e-10) -> MomentTrajectory:
    """Integrate Ẏ = M_{Θ(t)}(Y) from ``grid[0]`` and report Y on ``grid``.

    ``gains`` is a fixed (m0, m, n) gain or a schedule ``t -> gain`` covering
    the grid. ``tol`` is relative, with an absolute floor of 1e-6·tol times the
    initial scale, so moments decaying many orders of magnitude stay resolved.
    """
    schedule = as_gain_schedule(gains)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise SolverError("output grid must be a strictly increasing 1-D array")
    Y0 = Y0.Y if isinstance(Y0, SecondMomentState) else np.asarray(Y0, dtype=float)
    Y0 = p.check_family(Y0, p.dims.n, p.dims.n, "Y0")
    if np.min(eig_min(Y0)) < -1e-12:
        raise SolverError("initial second moment is not positive semidefinite")

    def fun(t, Y):
        return moment_rhs(p, schedule(t), Y)

    def post_step(t, Y):
        scale = max(1.0, float(np.max(np.abs(Y))))
        worst = float(np.min(eig_min(Y)))
        if worst < -1e-9 * scale:
            raise SolverError(f"second moment lost positive semidefiniteness at t={t:.6g} (min eigenvalue {worst:.3e})")
        return project_psd(Y, floor=-1e-9 * scale)

    if not np.any(Y0):
        Y = np.zeros((grid.size,) + Y0.shape)
        return MomentTrajectory(grid, Y)

    atol = tol * 1e-6 * float(np.max(np.abs(Y0)))
    integrator = DormandPrince54(fun, tol, post_step=post_step, atol=atol)
    trajectory = integrator.integrate(float(grid[0]), symmetrize(Y0), float(grid[-1]), knots=grid)
    Y = trajectory.evaluate(grid)
    logger.debug("moments of %s propagated on [%g, %g] in %d steps", p.name, grid[0], grid[-1], len(trajectory.t) - 1)
    return MomentTrajectory(grid, Y)

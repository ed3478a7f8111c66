"""
Problem instances of regime-switching stochastic LQ control.

The controlled state evolves as

    dX = [A(α)X + B(α)u] ds + [C(α)X + D(α)u] dW,

with α a continuous-time Markov chain on regimes {0, ..., m0-1} and running
cost g(x, ι, u) = ½(xᵀQ(ι)x + 2uᵀS(ι)x + uᵀR(ι)u). All per-regime data are
numpy arrays stacked along axis 0 and are read-only once a problem exists.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from switchlq.exceptions import ProblemStructureError, SingularMatrixError
from switchlq.utils.linalg import SYMMETRY_TOL, asymmetry, eig_min, symmetrize

logger = logging.getLogger(__name__)

GENERATOR_TOL = 1e-12

# a gain schedule maps time to a stacked per-regime gain of shape (m0, m, n)
GainSchedule = Callable[[float], np.ndarray]


def _frozen(array, name: str, shape=None) -> np.ndarray:
    try:
        out = np.array(array, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemStructureError(f"not a real array ({exc})", field=name) from None
    if shape is not None and out.shape != tuple(shape):
        raise ProblemStructureError(f"expected shape {tuple(shape)}, got {out.shape}", field=name)
    if not np.all(np.isfinite(out)):
        raise ProblemStructureError("non-finite entry", field=name)
    out.setflags(write=False)
    return out


def _symmetric(array: np.ndarray, name: str) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(array)))) if array.size else 1.0
    gap = asymmetry(array)
    if gap > SYMMETRY_TOL * scale:
        raise ProblemStructureError(f"not symmetric (max |M - M'| = {gap:.3e})", field=name)
    out = symmetrize(array)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dimensions:
    """State dimension n, control dimension m and number of regimes m0."""

    n: int
    m: int
    m0: int

    def __post_init__(self):
        for name in ("n", "m", "m0"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ProblemStructureError(f"must be a positive integer, got {value!r}", field=f"dims.{name}")


@dataclass(frozen=True, eq=False)
class RegimeCoefficients:
    """State-equation coefficients A, C of shape (m0, n, n) and B, D of shape (m0, n, m)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Cost weights Q (m0, n, n), S (m0, m, n) and R (m0, m, m)."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray


@dataclass(frozen=True, eq=False)
class SwitchingGenerator:
    """Rate matrix (λ_ιȷ) of the regime chain, units 1/time."""

    rates: np.ndarray

    @property
    def m0(self) -> int:
        return self.rates.shape[0]

    def holding_rate(self, regime: int) -> float:
        return float(-self.rates[regime, regime])


@dataclass(frozen=True, eq=False)
class LQProblem:
    """One instance of the regime-switching LQ problem."""

    dims: Dimensions
    coeffs: RegimeCoefficients
    cost: CostWeights
    generator: SwitchingGenerator
    name: str = "problem"

    @classmethod
    def from_matrices(cls, A, B, C, D, Q, R, S=None, generator=None, name: str = "problem") -> "LQProblem":
        """Build a problem from per-regime lists (or stacked arrays) of matrices.

        Shapes are checked against each other, Q and R are symmetrized when
        their asymmetry is within roundoff, and everything is made read-only.
        """
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        if A.ndim != 3 or B.ndim != 3:
            raise ProblemStructureError("A and B must be stacks of matrices (m0, rows, cols)")
        m0, n, _ = A.shape
        m = B.shape[2]
        dims = Dimensions(int(n), int(m), int(m0))
        if S is None:
            S = np.zeros((m0, m, n))
        if generator is None:
            generator = np.zeros((m0, m0))
        coeffs = RegimeCoefficients(
            A=_frozen(A, "A", (m0, n, n)),
            B=_frozen(B, "B", (m0, n, m)),
            C=_frozen(C, "C", (m0, n, n)),
            D=_frozen(D, "D", (m0, n, m)),
        )
        cost = CostWeights(
            Q=_symmetric(_frozen(Q, "Q", (m0, n, n)), "Q"),
            S=_frozen(S, "S", (m0, m, n)),
            R=_symmetric(_frozen(R, "R", (m0, m, m)), "R"),
        )
        gen = SwitchingGenerator(_frozen(generator, "generator", (m0, m0)))
        return cls(dims=dims, coeffs=coeffs, cost=cost, generator=gen, name=name)

    def replace(self, **matrices) -> "LQProblem":
        """Copy with some of A, B, C, D, Q, S, R, generator replaced."""
        current = dict(
            A=self.coeffs.A, B=self.coeffs.B, C=self.coeffs.C, D=self.coeffs.D,
            Q=self.cost.Q, S=self.cost.S, R=self.cost.R, generator=self.generator.rates,
        )
        current.update(matrices)
        return LQProblem.from_matrices(name=self.name, **current)

    def check_regime(self, regime: int) -> int:
        if not 0 <= int(regime) < self.dims.m0:
            raise ProblemStructureError(f"regime index {regime} outside 0..{self.dims.m0 - 1}", field="regime")
        return int(regime)

    def check_family(self, family, rows: int, cols: int, name: str) -> np.ndarray:
        family = np.asarray(family, dtype=float)
        expected = (self.dims.m0, rows, cols)
        if family.shape != expected:
            raise ProblemStructureError(f"expected shape {expected}, got {family.shape}", field=name)
        return family

    def check_gain(self, theta) -> np.ndarray:
        return self.check_family(theta, self.dims.m, self.dims.n, "theta")


@dataclass(frozen=True, eq=False)
class InitialTriple:
    """Initial time, state and (0-based) regime of a trajectory."""

    t: float
    x: np.ndarray
    regime: int

    def __post_init__(self):
        if not self.t >= 0:
            raise ProblemStructureError(f"initial time must be nonnegative, got {self.t}", field="t")
        if self.regime < 0:
            raise ProblemStructureError(f"regime index must be nonnegative, got {self.regime}", field="regime")
        object.__setattr__(self, "x", _frozen(np.atleast_1d(self.x), "x"))


@dataclass(frozen=True, eq=False)
class ValidationReport:
    """Outcome of :func:`validate_problem`.

    ``a3_margins[ι] = (λ_min(R(ι)), λ_min(Q(ι) - S(ι)ᵀR(ι)⁻¹S(ι)))``; the
    Schur margin is NaN when R(ι) is singular.
    """

    ok: bool
    a3_margins: np.ndarray
    q_margins: np.ndarray
    generator_ok: bool
    messages: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "generator_ok": self.generator_ok,
            "a3_margins": [
                {"regime": k + 1, "R_min_eig": float(r), "schur_min_eig": float(s), "Q_min_eig": float(q)}
                for k, ((r, s), q) in enumerate(zip(self.a3_margins, self.q_margins))
            ],
            "messages": list(self.messages),
        }


def _is_singular(M: np.ndarray) -> Optional[float]:
    w = np.linalg.eigvalsh(symmetrize(M))
    smallest = float(w[np.argmin(np.abs(w))])
    if abs(smallest) <= 1e-13 * max(1.0, float(np.max(np.abs(w)))):
        return smallest
    return None


def _schur(cost: CostWeights, regime: int) -> np.ndarray:
    R, S, Q = cost.R[regime], cost.S[regime], cost.Q[regime]
    return symmetrize(Q - S.T @ np.linalg.solve(R, S))


def convexity_margin(cost: CostWeights) -> np.ndarray:
    """Per-regime pairs (λ_min(R(ι)), λ_min(Q(ι) - S(ι)ᵀR(ι)⁻¹S(ι))) as an (m0, 2) array.

    The minimum over both columns is the uniform convexity constant of the
    cost functional.
    """
    margins = np.empty((cost.R.shape[0], 2))
    for regime in range(cost.R.shape[0]):
        singular = _is_singular(cost.R[regime])
        if singular is not None:
            raise SingularMatrixError("R", regime, singular)
        margins[regime, 0] = eig_min(cost.R[regime])
        margins[regime, 1] = eig_min(_schur(cost, regime))
    return margins


def check_generator(gen: SwitchingGenerator) -> List[str]:
    """Findings violating the generator properties (empty when it is a valid generator)."""
    findings = []
    rates = gen.rates
    m0 = rates.shape[0]
    scale = max(1.0, float(np.max(np.abs(rates))))
    for i in range(m0):
        for j in range(m0):
            if i != j and not rates[i, j] > 0:
                findings.append(
                    f"generator row {i + 1}: off-diagonal rate lambda[{i + 1},{j + 1}] = {rates[i, j]!r} is not positive"
                )
        row_sum = float(np.sum(rates[i]))
        if abs(row_sum) > GENERATOR_TOL * scale:
            findings.append(f"generator row {i + 1} sums to {row_sum!r} (must be 0)")
    return findings


def validate_problem(p: LQProblem) -> ValidationReport:
    """Check the generator properties and uniform convexity of the cost weights.

    Pure: the report depends only on ``p``.
    """
    messages = check_generator(p.generator)
    generator_ok = not messages

    m0 = p.dims.m0
    margins = np.full((m0, 2), np.nan)
    q_margins = np.empty(m0)
    a3_ok = True
    for regime in range(m0):
        label = f"regime {regime + 1}"
        q_margins[regime] = eig_min(p.cost.Q[regime])
        margins[regime, 0] = eig_min(p.cost.R[regime])
        if q_margins[regime] <= 0:
            a3_ok = False
            messages.append(f"Q not positive definite in {label} (min eigenvalue {q_margins[regime]:.6g})")
        if margins[regime, 0] <= 0:
            a3_ok = False
            messages.append(f"R not positive definite in {label} (min eigenvalue {margins[regime, 0]:.6g})")
        if _is_singular(p.cost.R[regime]) is None:
            margins[regime, 1] = eig_min(_schur(p.cost, regime))
            if margins[regime, 1] <= 0:
                a3_ok = False
                messages.append(
                    f"Q - S'R^-1 S not positive definite in {label} (min eigenvalue {margins[regime, 1]:.6g})"
                )
        else:
            messages.append(f"R singular in {label}; Schur complement undefined")

    margins.setflags(write=False)
    q_margins.setflags(write=False)
    report = ValidationReport(
        ok=generator_ok and a3_ok,
        a3_margins=margins,
        q_margins=q_margins,
        generator_ok=generator_ok,
        messages=messages,
    )
    logger.debug("validated %s: ok=%s (%d findings)", p.name, report.ok, len(messages))
    return report


def closed_loop(p: LQProblem, theta) -> tuple:
    """Feedback-shifted state coefficients (A + BΘ, C + DΘ)."""
    theta = p.check_gain(theta)
    A = p.coeffs.A + p.coeffs.B @ theta
    C = p.coeffs.C + p.coeffs.D @ theta
    return A, C


def apply_feedback_shift(p: LQProblem, theta) -> LQProblem:
    """Problem seen through the feedback u = ΘX + v.

    A ← A + BΘ, C ← C + DΘ, Q ← Q + ΘᵀS + SᵀΘ + ΘᵀRΘ, S ← S + RΘ; R and the
    generator are unchanged. The Schur complement Q - SᵀR⁻¹S is invariant.
    """
    theta = p.check_gain(theta)
    A, C = closed_loop(p, theta)
    S, R = p.cost.S, p.cost.R
    thetaT = np.swapaxes(theta, -1, -2)
    STt = np.swapaxes(S, -1, -2)
    Q = p.cost.Q + thetaT @ S + STt @ theta + thetaT @ R @ theta
    return p.replace(A=A, C=C, Q=symmetrize(Q), S=S + R @ theta)


def stage_cost(p: LQProblem, x, regime: int, u) -> float:
    """Running cost ½(xᵀQx + 2uᵀSx + uᵀRu) in the given regime."""
    regime = p.check_regime(regime)
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape != (p.dims.n,) or u.shape != (p.dims.m,):
        raise ProblemStructureError(
            f"expected x of length {p.dims.n} and u of length {p.dims.m}, got {x.shape} and {u.shape}"
        )
    Q, S, R = p.cost.Q[regime], p.cost.S[regime], p.cost.R[regime]
    return 0.5 * float(x @ Q @ x + 2.0 * u @ S @ x + u @ R @ u)


def constant_gains(theta) -> GainSchedule:
    """Gain schedule that returns the same stacked gain at every time."""
    theta = np.array(theta, dtype=float)
    theta.setflags(write=False)

    def schedule(t: float) -> np.ndarray:
        return theta

    schedule.constant = theta
    return schedule


def as_gain_schedule(gains) -> GainSchedule:
    """Accept either a schedule callable or a fixed (m0, m, n) gain."""
    if callable(gains):
        return gains
    return constant_gains(gains)


def zero_gain(p: LQProblem) -> np.ndarray:
    return np.zeros((p.dims.m0, p.dims.m, p.dims.n))


def stack(matrices: Sequence) -> np.ndarray:
    """Stack a list of per-regime matrices, promoting scalars to 1×1."""
    return np.stack([np.atleast_2d(np.asarray(M, dtype=float)) for M in matrices])

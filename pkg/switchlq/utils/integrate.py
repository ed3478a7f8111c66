"""
Explicit adaptive Runge-Kutta integration with dense output.

The Dormand-Prince 5(4) pair advances the 5th order solution; the difference
to the embedded 4th order solution is the local error estimate. Steps are
chosen by a PI controller. Dense output is a cubic Hermite spline through the
accepted nodes, using the derivative that the FSAL stage provides for free.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from switchlq.exceptions import SolverError, StepSizeUnderflowError

logger = logging.getLogger(__name__)

RHS = Callable[[float, np.ndarray], np.ndarray]


@dataclass
class Trajectory:
    """Accepted nodes of an integration, with Hermite dense output."""

    t: np.ndarray
    y: np.ndarray
    f: np.ndarray
    stopped: bool = False
    rejected: int = 0
    _spline: Optional[CubicHermiteSpline] = field(default=None, repr=False)

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    @property
    def y_final(self) -> np.ndarray:
        return self.y[-1]

    def evaluate(self, times) -> np.ndarray:
        """Values at ``times`` (inside the integrated interval); node times return node values."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        shape = self.y.shape[1:]
        if len(self.t) == 1:
            return np.broadcast_to(self.y[0], (len(times),) + shape).copy()
        if self._spline is None:
            n_nodes = len(self.t)
            self._spline = CubicHermiteSpline(
                self.t, self.y.reshape(n_nodes, -1), self.f.reshape(n_nodes, -1),
                axis=0, extrapolate=False,
            )
        out = self._spline(times).reshape((len(times),) + shape)
        # spline polynomials reproduce nodes only up to roundoff; nodes are exact
        idx = np.searchsorted(self.t, times)
        hit = (idx < len(self.t)) & (self.t[np.minimum(idx, len(self.t) - 1)] == times)
        out[hit] = self.y[idx[hit]]
        return out


class DormandPrince54:
    """Dormand-Prince 5(4) pair. Seven stages (FSAL), 5th order propagation
    with an embedded 4th order error estimate.

    Parameters
    ----------
    fun : callable
        Right-hand side ``fun(t, y) -> dy/dt`` for arrays of any fixed shape.
    tol : float
        Local relative tolerance.
    atol : float, optional
        Local absolute tolerance, defaults to ``tol``.
    post_step : callable, optional
        ``post_step(t, y) -> y`` applied to every accepted state (projection
        onto the constraint set, invariant monitoring). May raise.
    max_step : float, optional
        Upper bound on the step size.
    """

    #intermediate evaluation times
    eval_stages = [0.0, 1/5, 3/10, 4/5, 8/9, 1.0, 1.0]

    #butcher table
    BT = {
        1: [      1/5],
        2: [     3/40,        9/40],
        3: [    44/45,      -56/15,       32/9],
        4: [19372/6561, -25360/2187, 64448/6561, -212/729],
        5: [ 9017/3168,     -355/33, 46732/5247,   49/176, -5103/18656],
        6: [    35/384,           0,   500/1113,  125/192,  -2187/6784, 11/84],
    }

    #coefficients for local truncation error estimate (5th minus 4th order weights)
    TR = [71/57600, 0, -71/16695, 71/1920, -17253/339200, 22/525, -1/40]

    #PI step control (Gustafsson), error exponent of a 5(4) pair
    beta = 0.04
    alpha = 0.2 - 0.75 * 0.04
    safety = 0.9
    min_factor = 0.2
    max_factor = 10.0

    def __init__(self, fun: RHS, tol: float, post_step=None, max_step: float = np.inf,
                 max_steps: int = 1_000_000, atol: Optional[float] = None):
        if tol <= 0 or (atol is not None and atol <= 0):
            raise SolverError(f"tolerances must be positive, got rtol={tol}, atol={atol}")
        self.fun = fun
        self.tol = tol
        self.atol = tol if atol is None else atol
        self.post_step = post_step
        self.max_step = max_step
        self.max_steps = max_steps

    def _error_norm(self, err: np.ndarray, y: np.ndarray, y_new: np.ndarray) -> float:
        scale = self.atol + self.tol * np.maximum(np.abs(y), np.abs(y_new))
        return float(np.sqrt(np.mean((err / scale) ** 2)))

    def _initial_step(self, t0: float, y0: np.ndarray, f0: np.ndarray, span: float) -> float:
        # max-norms: components starting at zero must not dictate the first step
        d0 = float(np.max(np.abs(y0), initial=0.0))
        d1 = float(np.max(np.abs(f0), initial=0.0))
        h = 0.01 * d0 / d1 if d0 > 0 and d1 > 0 else 1e-6
        return min(h, span, self.max_step)

    def _step(self, t: float, y: np.ndarray, f0: np.ndarray, h: float):
        k = [f0]
        for stage in range(1, 7):
            incr = sum(a * kj for a, kj in zip(self.BT[stage], k) if a != 0)
            k.append(self.fun(t + self.eval_stages[stage] * h, y + h * incr))
        # the last stage is evaluated at the propagated solution (FSAL)
        y_new = y + h * sum(b * kj for b, kj in zip(self.BT[6], k[:6]) if b != 0)
        err = h * sum(e * kj for e, kj in zip(self.TR, k) if e != 0)
        return y_new, k[6], err

    def integrate(self, t0: float, y0: np.ndarray, t1: float,
                  stop: Optional[Callable[..., bool]] = None,
                  h0: Optional[float] = None, knots=None) -> Trajectory:
        """Integrate from ``t0`` to ``t1`` (``t1 > t0``).

        ``stop(t, y, f, y_prev, h)`` is called after each accepted step; the
        integration ends early when it returns True. Times in ``knots`` are
        hit exactly by accepted steps, so their values carry no interpolation
        error.
        """
        y = np.array(y0, dtype=float)
        if self.post_step is not None:
            y = self.post_step(t0, y)
        f = np.asarray(self.fun(t0, y), dtype=float)
        ts, ys, fs = [t0], [y], [f]
        if not t1 > t0:
            return Trajectory(np.array(ts), np.array(ys), np.array(fs))

        pending = np.unique(np.asarray([] if knots is None else knots, dtype=float))
        pending = list(pending[(pending > t0) & (pending < t1)])[::-1]

        t = t0
        h = h0 if h0 is not None else self._initial_step(t0, y, f, t1 - t0)
        err_prev = 1.0
        rejected = 0
        stopped = False
        for _ in range(self.max_steps):
            h = min(h, t1 - t, self.max_step)
            if h < 1e-14 * max(1.0, abs(t)):
                raise StepSizeUnderflowError(t, h)
            target = pending[-1] if pending else t1
            h_try = min(h, target - t)

            y_new, f_new, err = self._step(t, y, f, h_try)
            err_norm = self._error_norm(err, y, y_new)
            if not np.isfinite(err_norm):
                rejected += 1
                h = h_try * self.min_factor
                continue

            if err_norm <= 1.0:
                t_new = t + h_try if t + h_try < target else target
                if pending and t_new == pending[-1]:
                    pending.pop()
                if self.post_step is not None:
                    projected = self.post_step(t_new, y_new)
                    if not np.array_equal(projected, y_new):
                        y_new = projected
                        f_new = np.asarray(self.fun(t_new, y_new), dtype=float)
                y_prev = y
                t, y, f = t_new, y_new, f_new
                ts.append(t)
                ys.append(y)
                fs.append(f)

                err_norm = max(err_norm, 1e-10)
                factor = self.safety * err_norm ** (-self.alpha) * err_prev ** self.beta
                # a step shortened to meet a knot does not shrink the proposal
                h = max(h_try * min(self.max_factor, max(self.min_factor, factor)), h if h_try < h else 0.0)
                err_prev = err_norm

                if stop is not None and stop(t, y, f, y_prev, ts[-1] - ts[-2]):
                    stopped = True
                    break
                if t >= t1:
                    break
            else:
                rejected += 1
                factor = self.safety * err_norm ** (-self.alpha)
                h = h_try * min(1.0, max(self.min_factor, factor))
        else:
            raise SolverError(f"maximum number of steps ({self.max_steps}) exceeded at t={t:.6g}")

        logger.debug("integrated to t=%.6g in %d steps (%d rejected)", t, len(ts) - 1, rejected)
        return Trajectory(np.array(ts), np.array(ys), np.array(fs), stopped=stopped, rejected=rejected)

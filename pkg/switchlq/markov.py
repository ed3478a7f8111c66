"""
Regime chain: the coupling operator Λ[·], path sampling and transition laws.
"""
import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import scipy.linalg as la

from switchlq.exceptions import ProblemStructureError
from switchlq.model import SwitchingGenerator
from switchlq.utils.linalg import symmetrize
from switchlq.utils.runtime import make_rng

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence]


@dataclass(frozen=True, eq=False)
class ChainPath:
    """One càdlàg sample path of the regime chain on ``horizon = (t0, t1)``.

    ``states[k]`` holds on ``[jump_times[k-1], jump_times[k])`` with
    ``jump_times[-1] := t0``; there is one more state than jumps.
    """

    jump_times: np.ndarray
    states: np.ndarray
    horizon: Tuple[float, float]

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def state_at(self, t) -> np.ndarray:
        """Regime at time(s) ``t`` (right-continuous)."""
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right")
        return self.states[idx]

    def occupation(self, m0: int) -> np.ndarray:
        """Fraction of ``horizon`` spent in each regime."""
        t0, t1 = self.horizon
        edges = np.concatenate(([t0], self.jump_times, [t1]))
        out = np.zeros(m0)
        np.add.at(out, self.states, np.diff(edges))
        return out / (t1 - t0)


def lambda_apply(gen: SwitchingGenerator, sigma) -> np.ndarray:
    """Λ[σ](ι) = Σ_ȷ λ_ιȷ σ(ȷ) for a stacked family σ of shape (m0, n, n)."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 3 or sigma.shape[0] != gen.m0:
        raise ProblemStructureError(f"expected a family of {gen.m0} matrices, got shape {sigma.shape}", field="sigma")
    out = np.einsum("ij,jkl->ikl", gen.rates, sigma)
    return symmetrize(out) if np.array_equal(sigma, np.swapaxes(sigma, -1, -2)) else out


def lambda_adjoint_apply(gen: SwitchingGenerator, family) -> np.ndarray:
    """Adjoint coupling Σ_ȷ λ_ȷι Y(ȷ), the dual of :func:`lambda_apply`."""
    family = np.asarray(family, dtype=float)
    return np.einsum("ji,jkl->ikl", gen.rates, family)


def sample_chain_path(gen: SwitchingGenerator, start_regime: int, t0: float, t1: float,
                      rng_seed: Seed) -> ChainPath:
    """Sample a path on (t0, t1] from exponential holding times.

    The holding time in regime ι is exponential with rate -λ_ιι; at a jump
    the next regime ȷ ≠ ι is drawn with probability λ_ιȷ / (-λ_ιι). An
    absorbing regime ends the jumps. A jump landing exactly on ``t1`` is kept.
    """
    if not t1 > t0:
        raise ProblemStructureError(f"horizon must satisfy t0 < t1, got ({t0}, {t1})")
    if not 0 <= start_regime < gen.m0:
        raise ProblemStructureError(f"start regime {start_regime} outside 0..{gen.m0 - 1}", field="regime")

    rng = make_rng(rng_seed)
    rates = gen.rates
    jumps, states = [], [int(start_regime)]
    t, current = float(t0), int(start_regime)
    while True:
        leave = -rates[current, current]
        if leave <= 0:
            break
        t += rng.exponential(1.0 / leave)
        if t > t1:
            break
        probs = np.clip(rates[current], 0.0, None)
        probs[current] = 0.0
        current = int(rng.choice(gen.m0, p=probs / probs.sum()))
        jumps.append(t)
        states.append(current)
    return ChainPath(np.array(jumps, dtype=float), np.array(states, dtype=int), (float(t0), float(t1)))


def sample_chain_state(gen: SwitchingGenerator, start_regime: int, t0: float, t: float, seed: Seed) -> int:
    """Regime α(t) of one sampled path started in ``start_regime`` at ``t0``."""
    if t == t0:
        return int(start_regime)
    return int(sample_chain_path(gen, start_regime, t0, t, seed).states[-1])


def transition_matrix(gen: SwitchingGenerator, t: float) -> np.ndarray:
    """exp(tΛ) by scaling and squaring with Padé approximation.

    Roundoff below zero is clipped and rows are renormalized to sum to 1.
    """
    if t < 0:
        raise ProblemStructureError(f"time must be nonnegative, got {t}", field="t")
    if t == 0:
        return np.eye(gen.m0)
    P = la.expm(t * gen.rates)
    P = np.clip(P, 0.0, None)
    return P / P.sum(axis=1, keepdims=True)


def stationary_distribution(gen: SwitchingGenerator) -> np.ndarray:
    """Probability vector π with πΛ = 0 (unique when the chain is irreducible)."""
    m0 = gen.m0
    system = np.vstack([gen.rates.T, np.ones((1, m0))])
    rhs = np.zeros(m0 + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()

"""Named problem instances and random uniformly convex problems shared by the tests."""
import os
import sys

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../')))

from switchlq.model import LQProblem

PROBLEMS_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '../problems'))

GOLDEN = (1 + 5 ** 0.5) / 2


def scalar(A, B, C, D, Q, S, R, name):
    return LQProblem.from_matrices(
        A=[[[A]]], B=[[[B]]], C=[[[C]]], D=[[[D]]], Q=[[[Q]]], S=[[[S]]], R=[[[R]]], name=name,
    )


SCALAR1 = scalar(0, 1, 0, 0, 1, 0, 1, "scalar1")
SCALAR2 = scalar(0, 1, 0, 1, 1, 0, 1, "scalar2")
INDEFINITE_R = scalar(0, 0, 0, 1, 1, 0, -1, "indefinite_r")
TWOREG = LQProblem.from_matrices(
    A=[[[0.0]], [[-1.0]]], B=[[[1.0]], [[1.0]]], C=[[[0.0]], [[0.0]]], D=[[[0.0]], [[0.0]]],
    Q=[[[1.0]], [[1.0]]], S=[[[0.0]], [[0.0]]], R=[[[1.0]], [[1.0]]],
    generator=[[-1.0, 1.0], [1.0, -1.0]], name="tworeg",
)

CORPUS = (SCALAR1, SCALAR2, TWOREG)


def tworeg_oracle():
    """(P_∞(1), P_∞(2)) of TWOREG by bracketing the coupled root.

    Regime 1 gives P2 = P1² + P1 - 1; substituting into regime 2 leaves
    P1 - 3P2 + 1 - P2² = 0, which changes sign on (1/φ, 1).
    """
    from scipy.optimize import brentq

    def p2(p1):
        return p1 ** 2 + p1 - 1

    def f(p1):
        return p1 - 3 * p2(p1) + 1 - p2(p1) ** 2

    p1 = brentq(f, 1 / GOLDEN + 1e-12, 1.0, xtol=1e-15)
    return p1, p2(p1)


def random_valid_problem(seed, n=2, m=2, m0=2, noise=0.3):
    """Random problem with R ≻ 0 and Q - SᵀR⁻¹S ≻ 0 in every regime."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m0, n, n)) * 0.5 - np.eye(n)
    B = rng.normal(size=(m0, n, m))
    C = rng.normal(size=(m0, n, n)) * noise
    D = rng.normal(size=(m0, n, m)) * noise
    R, S, Q = [], [], []
    for _ in range(m0):
        G = rng.normal(size=(m, m))
        Rk = G @ G.T + np.eye(m)
        Sk = rng.normal(size=(m, n)) * 0.5
        H = rng.normal(size=(n, n))
        Qk = H @ H.T + np.eye(n) + Sk.T @ np.linalg.solve(Rk, Sk)
        R.append(Rk)
        S.append(Sk)
        Q.append((Qk + Qk.T) / 2)
    rates = rng.uniform(0.5, 2.0, size=(m0, m0))
    np.fill_diagonal(rates, 0.0)
    np.fill_diagonal(rates, -rates.sum(axis=1))
    return LQProblem.from_matrices(A=A, B=B, C=C, D=D, Q=Q, S=S, R=R, generator=rates, name=f"random{seed}")


def problem_path(name):
    return os.path.join(PROBLEMS_DIR, f"{name}.json")

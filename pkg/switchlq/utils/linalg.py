"""
Helpers for stacked families of small matrices.

A "family" is an array of shape ``(m0, r, c)`` holding one matrix per regime.
Symmetric families are vectorized with the scaled upper-triangle basis
(off-diagonal entries weighted by sqrt(2)), which is orthonormal for the
Frobenius inner product, so operator matrices built in that basis are
similar to the operators themselves.
"""
from typing import Callable, Tuple

import numpy as np
import scipy.linalg as la

SYMMETRY_TOL = 1e-12
PSD_ROUNDOFF = 1e-12


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Return (M + Mᵀ)/2 over the last two axes."""
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def asymmetry(M: np.ndarray) -> float:
    """Largest absolute entry of M - Mᵀ."""
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(M - np.swapaxes(M, -1, -2))))


def eig_min(M: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of each symmetric matrix in a family (or of one matrix)."""
    return np.linalg.eigvalsh(symmetrize(M))[..., 0]


def eig_max(M: np.ndarray) -> np.ndarray:
    """Largest eigenvalue of each symmetric matrix in a family (or of one matrix)."""
    return np.linalg.eigvalsh(symmetrize(M))[..., -1]


def op_norm(M: np.ndarray) -> np.ndarray:
    """Spectral norm over the last two axes."""
    return np.linalg.norm(M, ord=2, axis=(-2, -1))


def project_psd(M: np.ndarray, floor: float = -PSD_ROUNDOFF) -> np.ndarray:
    """Clip eigenvalues in ``(floor, 0)`` to zero, leaving genuine defects visible.

    Eigenvalues below ``floor`` are kept so that a real loss of
    semidefiniteness is still detected downstream.
    """
    out = symmetrize(M)
    w, V = np.linalg.eigh(out)
    tiny = (w < 0.0) & (w > floor)
    if not np.any(tiny):
        return out
    w = np.where(tiny, 0.0, w)
    return symmetrize(np.einsum("...ij,...j,...kj->...ik", V, w, V))


def triu_indices(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n)


def svec(family: np.ndarray) -> np.ndarray:
    """Vectorize a symmetric family ``(m0, n, n)`` into ``m0 * n(n+1)/2`` coordinates."""
    n = family.shape[-1]
    rows, cols = triu_indices(n)
    weights = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return (family[..., rows, cols] * weights).reshape(-1)


def smat(vec: np.ndarray, m0: int, n: int) -> np.ndarray:
    """Inverse of :func:`svec`."""
    rows, cols = triu_indices(n)
    weights = np.where(rows == cols, 1.0, 1.0 / np.sqrt(2.0))
    out = np.zeros((m0, n, n))
    coords = vec.reshape(m0, -1) * weights
    out[:, rows, cols] = coords
    out[:, cols, rows] = coords
    return out


def sym_dim(m0: int, n: int) -> int:
    return m0 * n * (n + 1) // 2


def operator_matrix(op: Callable[[np.ndarray], np.ndarray], m0: int, n: int) -> np.ndarray:
    """Matrix of a linear map on symmetric families, in the scaled svec basis."""
    dim = sym_dim(m0, n)
    out = np.empty((dim, dim))
    basis = np.eye(dim)
    for k in range(dim):
        out[:, k] = svec(op(smat(basis[k], m0, n)))
    return out


def spectral_abscissa(M: np.ndarray) -> float:
    """Largest real part of the eigenvalues of a square matrix."""
    return float(np.max(la.eigvals(M).real))


def block_diag_family(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Per-regime block diagonal of two families."""
    return np.stack([la.block_diag(a, b) for a, b in zip(first, second)])

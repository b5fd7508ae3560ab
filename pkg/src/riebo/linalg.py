"""Matrix-function kernels for symmetric and SPD matrices.

Everything here works on plain ``numpy`` arrays in float64.  Matrix functions
go through a symmetric eigendecomposition; the Frechet derivative of the
matrix logarithm uses the Daleckii-Krein formula, with a block-matrix
evaluation kept alongside as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NonFiniteError, NotPositiveDefiniteError

# relative eigenvalue gap below which divided differences use their limit
DEGENERATE_GAP = 1e-8


@dataclass(frozen=True)
class SymEigen:
    """Eigendecomposition ``S = Q diag(values) Q^T`` with descending values."""

    vectors: np.ndarray
    values: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T

    def apply(self, fun) -> np.ndarray:
        """Return ``Q diag(fun(values)) Q^T`` (symmetrized)."""
        out = (self.vectors * fun(self.values)) @ self.vectors.T
        return sym(out)


def sym(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def _check_square(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    if not np.isfinite(S).all():
        raise NonFiniteError("matrix has non-finite entries")
    return S


def sym_eigen(S: np.ndarray, *, check: bool = True) -> SymEigen:
    """Eigendecomposition of a symmetric matrix, eigenvalues in descending order.

    Raises ``ValueError`` if ``S`` is not symmetric to ``1e-10`` relative.
    """
    if check:
        S = _check_square(S)
        scale = max(np.abs(S).max(), 1.0)
        if np.abs(S - S.T).max() > 1e-10 * scale:
            raise ValueError("matrix is not symmetric")
    try:
        w, Q = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NonFiniteError(f"eigensolver failed: {exc}") from exc
    return SymEigen(vectors=Q[:, ::-1], values=w[::-1])


def _spd_eigen(S: np.ndarray) -> SymEigen:
    eig = sym_eigen(S)
    if eig.values[-1] <= 0.0:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (min eigenvalue {eig.values[-1]:.3e})"
        )
    return eig


def spd_sqrt(S: np.ndarray) -> np.ndarray:
    return _spd_eigen(S).apply(np.sqrt)


def spd_invsqrt(S: np.ndarray) -> np.ndarray:
    return _spd_eigen(S).apply(lambda w: 1.0 / np.sqrt(w))


def spd_log(S: np.ndarray) -> np.ndarray:
    return _spd_eigen(S).apply(np.log)


def sym_exp(V: np.ndarray) -> np.ndarray:
    return sym_eigen(V).apply(np.exp)


def loewner_log(values: np.ndarray) -> np.ndarray:
    """First divided differences of ``log`` on the given eigenvalues.

    ``K[i, j] = (log l_i - log l_j) / (l_i - l_j)`` and ``K[i, i] = 1 / l_i``.
    Near-equal pairs use ``2 / (l_i + l_j)``.
    """
    lam = np.asarray(values, dtype=np.float64)
    li = lam[:, None]
    lj = lam[None, :]
    diff = li - lj
    close = np.abs(diff) < DEGENERATE_GAP * np.maximum(li, lj)
    safe = np.where(close, 1.0, diff)
    # log1p keeps the ratio accurate for moderately close eigenvalues
    K = np.log1p(diff / lj) / safe
    return np.where(close, 2.0 / (li + lj), K)


def frechet_log(Y: np.ndarray, E: np.ndarray, eig: SymEigen | None = None) -> np.ndarray:
    """Directional derivative ``D log(Y)[E]`` of the matrix logarithm.

    Uses the Daleckii-Krein formula ``Q (K o (Q^T E Q)) Q^T``.  ``E`` need not
    be symmetric; when it is, the result is symmetrized.  A precomputed
    eigendecomposition of ``Y`` may be passed to skip the factorization.
    """
    if eig is None:
        eig = _spd_eigen(Y)
    elif eig.values[-1] <= 0.0:
        raise NotPositiveDefiniteError("matrix is not positive definite")
    E = np.asarray(E, dtype=np.float64)
    Q = eig.vectors
    K = loewner_log(eig.values)
    out = Q @ (K * (Q.T @ E @ Q)) @ Q.T
    if np.array_equal(E, E.T):
        out = sym(out)
    return out


def frechet_log_block(Y: np.ndarray, E: np.ndarray) -> np.ndarray:
    """``D log(Y)[E]`` read off the top-right block of ``log([[Y, E], [0, Y]])``.

    The block logarithm is computed with :func:`scipy.linalg.logm`, so this
    route shares no code with :func:`frechet_log`.
    """
    Y = _check_square(Y)
    _spd_eigen(Y)
    d = Y.shape[0]
    block = np.zeros((2 * d, 2 * d))
    block[:d, :d] = Y
    block[d:, d:] = Y
    block[:d, d:] = E
    L = scipy.linalg.logm(block)
    return np.real(L[:d, d:])

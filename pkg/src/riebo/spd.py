"""Riemannian calculus on the SPD manifold.

Conversions from Euclidean to Riemannian gradients/Hessians under the
affine-invariant metric, plus closed forms for the two losses used by the
robust problems:

* squared geodesic distance ``h(S) = dist(S, A)^2`` (Karcher mean), and
* the Gaussian negative log-likelihood ``L(S; x) = 1/2 logdet S + 1/2 x^T S^-1 x``.

All matrix-valued outputs are symmetrized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ManifoldError, NotPositiveDefiniteError
from .linalg import SymEigen, frechet_log, frechet_log_block, sym, sym_eigen
from .manifolds import SPD, ManifoldPoint, TangentVector

__all__ = [
    "KarcherTerm",
    "egrad_to_rgrad",
    "ehess_to_rhess",
    "karcher_loss",
    "karcher_egrad",
    "karcher_ehess_apply",
    "karcher_rhess_apply",
    "karcher_ehess_entrywise",
    "KarcherHessian",
    "mle_loss",
    "mle_egrad",
    "mle_ehess_apply",
    "mle_rhess_apply",
]


def _as_spd(S) -> tuple[ManifoldPoint, np.ndarray]:
    if isinstance(S, ManifoldPoint):
        if not isinstance(S.manifold, SPD):
            raise ManifoldError(f"expected an SPD point, got {S.manifold.name}")
        return S, S.payload
    S = np.asarray(S, dtype=np.float64)
    return SPD(S.shape[0]).point(S), S


def _payload(V) -> np.ndarray:
    return V.payload if isinstance(V, TangentVector) else np.asarray(V, dtype=np.float64)


def egrad_to_rgrad(S, G) -> TangentVector:
    """Riemannian gradient ``S G S`` from a (symmetric) Euclidean gradient."""
    p, Sm = _as_spd(S)
    G = np.asarray(G, dtype=np.float64)
    if G.shape != Sm.shape:
        raise ManifoldError(f"gradient shape {G.shape} does not match point {Sm.shape}")
    return TangentVector(p, sym(Sm @ G @ Sm))


def ehess_to_rhess(S, egrad, ehess_v, V) -> TangentVector:
    """Riemannian Hessian-vector product ``S ehess[V] S + sym(S egrad V)``."""
    p, Sm = _as_spd(S)
    egrad = np.asarray(egrad, dtype=np.float64)
    ehess_v = np.asarray(ehess_v, dtype=np.float64)
    Vm = _payload(V)
    if not (egrad.shape == ehess_v.shape == Vm.shape == Sm.shape):
        raise ManifoldError("shape mismatch in ehess_to_rhess")
    return TangentVector(p, sym(Sm @ ehess_v @ Sm) + sym(Sm @ egrad @ Vm))


# ---------------------------------------------------------------------------
# squared geodesic distance


@dataclass(frozen=True)
class KarcherTerm:
    """One datum of a weighted Karcher objective, with its matrix roots."""

    data_matrix: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        A = np.asarray(self.data_matrix, dtype=np.float64)
        eig = sym_eigen(A)
        if eig.values[-1] <= 0:
            raise NotPositiveDefiniteError("Karcher data matrix is not positive definite")
        if self.weight < 0:
            raise ValueError("Karcher weight must be nonnegative")
        object.__setattr__(self, "data_matrix", A)
        object.__setattr__(self, "_half", eig.apply(np.sqrt))
        object.__setattr__(self, "_ihalf", eig.apply(lambda w: 1.0 / np.sqrt(w)))

    @property
    def half(self) -> np.ndarray:
        return self._half

    @property
    def ihalf(self) -> np.ndarray:
        return self._ihalf


def _term(A) -> KarcherTerm:
    return A if isinstance(A, KarcherTerm) else KarcherTerm(A)


class KarcherHessian:
    """Derivatives of ``h(S) = dist(S, A)^2`` at a fixed ``S``.

    Factorizes ``Y = A^-1/2 S A^-1/2`` once; :meth:`rhess` then costs a
    handful of matrix products per direction.
    """

    def __init__(self, S, A):
        self.point, self.S = _as_spd(S)
        self.term = _term(A)
        P = self.term.ihalf
        self.Y = sym(P @ self.S @ P)
        self.eig = sym_eigen(self.Y)
        if self.eig.values[-1] <= 0:
            raise NotPositiveDefiniteError("A^-1/2 S A^-1/2 is not positive definite")
        self.logY = self.eig.apply(np.log)
        self.Sinv = SPD(self.S.shape[0]).inverse(self.point)
        # S^-1 A^1/2 log(Y) A^-1/2
        self._B = self.Sinv @ self.term.half @ self.logY @ P

    def loss(self) -> float:
        return float(np.sum(np.log(self.eig.values) ** 2))

    def egrad(self) -> np.ndarray:
        return 2.0 * sym(self._B)

    def ehess(self, V) -> np.ndarray:
        """Euclidean Hessian ``2 sym(-S^-1 V A^-1/2 log(Y) A^1/2 S^-1 + L)``.

        ``L = P D log(Y)[C] Q`` with ``P = Q = A^-1/2`` and
        ``C = A^-1/2 V S^-1 A^1/2``; a single Frechet-derivative application
        replaces the entry-by-entry assembly of ``L``.
        """
        V = _payload(V)
        P = self.term.ihalf
        first = -self.Sinv @ V @ P @ self.logY @ self.term.half @ self.Sinv
        C = P @ V @ self.Sinv @ self.term.half
        L = P @ frechet_log(self.Y, C, eig=self.eig) @ P
        return 2.0 * sym(first + L)

    def rhess(self, V) -> np.ndarray:
        V = _payload(V)
        S = self.S
        return sym(S @ self.ehess(V) @ S) + sym(S @ self.egrad() @ V)


def karcher_loss(S, A) -> float:
    """``dist(S, A)^2``."""
    return KarcherHessian(S, A).loss()


def karcher_egrad(S, A) -> np.ndarray:
    """Euclidean gradient of ``dist(S, A)^2``: ``2 S^-1/2 log(S^1/2 A^-1 S^1/2) S^-1/2``."""
    return KarcherHessian(S, A).egrad()


def karcher_ehess_apply(S, A, V) -> np.ndarray:
    return KarcherHessian(S, A).ehess(V)


def karcher_rhess_apply(S, A, V) -> TangentVector:
    """Riemannian Hessian of ``dist(S, A)^2`` applied to ``V``."""
    kh = KarcherHessian(S, A)
    return TangentVector(kh.point, kh.rhess(V))


def karcher_ehess_entrywise(S, A, V) -> np.ndarray:
    """Euclidean Hessian of ``dist(S, A)^2`` with ``L`` assembled entry by entry.

    Each ``L[i, j]`` is the pairing of ``[[0, C], [0, 0]]`` with the logarithm
    of the ``2d x 2d`` block matrix built from the basis matrix ``E_ij``,
    evaluated by :func:`frechet_log_block`.  Costs ``d^2`` block logarithms;
    meant as a cross-check for small ``d``.
    """
    _, Sm = _as_spd(S)
    term = _term(A)
    V = _payload(V)
    d = Sm.shape[0]
    P = term.ihalf
    Y = sym(P @ Sm @ P)
    logY = sym_eigen(Y).apply(np.log)
    Sinv = np.linalg.inv(Sm)
    first = -Sinv @ V @ P @ logY @ term.half @ Sinv
    C = P @ V @ Sinv @ term.half
    L = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = 1.0
            # top-right block of log(diag(P,P) [[S, E],[0, S]] diag(P,P))
            L[i, j] = np.sum(C * frechet_log_block(Y, P @ E @ P))
    return 2.0 * sym(first + L)


# ---------------------------------------------------------------------------
# Gaussian negative log-likelihood


def _mle_parts(S, x):
    p, Sm = _as_spd(S)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (Sm.shape[0],):
        raise ManifoldError(f"data vector shape {x.shape} does not match point {Sm.shape}")
    Sinv = SPD(Sm.shape[0]).inverse(p)
    z = Sinv @ x
    return p, Sm, Sinv, x, z


def mle_loss(S, x) -> float:
    """``1/2 logdet S + 1/2 x^T S^-1 x``."""
    _, Sm, _, x, z = _mle_parts(S, x)
    sign, logdet = np.linalg.slogdet(Sm)
    if sign <= 0:
        raise NotPositiveDefiniteError("covariance is not positive definite")
    return 0.5 * logdet + 0.5 * float(x @ z)


def mle_egrad(S, x) -> np.ndarray:
    """``1/2 S^-1 - 1/2 S^-1 x x^T S^-1``."""
    _, _, Sinv, _, z = _mle_parts(S, x)
    return sym(0.5 * Sinv - 0.5 * np.outer(z, z))


def mle_ehess_apply(S, x, V) -> np.ndarray:
    """``-1/2 S^-1 V S^-1 + 1/2 (S^-1 V S^-1 x x^T S^-1 + S^-1 x x^T S^-1 V S^-1)``."""
    _, _, Sinv, x, z = _mle_parts(S, x)
    V = _payload(V)
    W = Sinv @ V @ Sinv
    Wx = W @ x
    return sym(-0.5 * W + 0.5 * (np.outer(Wx, z) + np.outer(z, Wx)))


def mle_rhess_apply(S, x, V) -> TangentVector:
    p, Sm = _as_spd(S)
    return ehess_to_rhess(p, mle_egrad(p, x), mle_ehess_apply(p, x, V), V)

"""Problem instances: a Euclidean toy quadratic and the robust SPD problems.

The toy family has closed-form lower solution and hypergradient and serves
as the test oracle for the estimators.  The robust problems reweight the
data of a Karcher-mean or Gaussian-MLE lower problem with simplex weights
chosen adversarially by the upper level:

    min_{w in simplex}  lam ||w - 1/n||^2 - sum_i w_i l_i(S*(w))
    S*(w) = argmin_{S in SPD} sum_i w_i l_i(S)
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np

from .errors import ManifoldError, NotPositiveDefiniteError
from .hypergrad import BilevelOracles
from .linalg import sym
from .manifolds import (
    SPD,
    Euclidean,
    ManifoldPoint,
    SimplexSet,
    SmoothnessMeta,
    TangentVector,
)
from .spd import KarcherHessian, KarcherTerm

__all__ = [
    "ToyQuadratic",
    "make_toy_quadratic",
    "RobustInstance",
    "make_robust_instance",
    "robust_oracles",
    "robust_lower_oracles",
    "robust_upper_grad",
    "robust_cross_apply",
    "robust_cross_adjoint",
    "generate_spd_data",
    "generate_gaussian_data",
    "random_orthogonal",
]


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian with sign fix)."""
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def _check_dim(name: str, value) -> int:
    if int(value) != value or int(value) < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


# ---------------------------------------------------------------------------
# toy quadratic


class ToyQuadratic:
    """Euclidean bilevel quadratic with closed-form solution.

    ``g(x, y) = 1/2 y^T A y - y^T (B x + c)`` and
    ``f(x, y) = 1/2 y^T y + 1/2 x^T D x``, so ``y*(x) = A^-1 (B x + c)`` and
    ``grad Phi(x) = D x + B^T A^-1 y*(x)``.

    ``sigma`` scales additive Gaussian noise in the stochastic samplers;
    ``radius`` sets the region ``||x|| <= R``, ``||y - y*(x)|| <= R`` over
    which ``meta.l_f0`` bounds the upper gradient.
    """

    def __init__(self, A, B, c, D, sigma: float = 0.0, radius: float = 2.0):
        A = np.array(A, dtype=np.float64)
        B = np.array(B, dtype=np.float64)
        c = np.array(c, dtype=np.float64)
        D = np.array(D, dtype=np.float64)
        n, m = B.shape
        if A.shape != (n, n) or c.shape != (n,) or D.shape != (m, m):
            raise ValueError("inconsistent toy quadratic dimensions")
        if not (np.allclose(A, A.T) and np.allclose(D, D.T)):
            raise ValueError("A and D must be symmetric")
        wA = np.linalg.eigvalsh(A)
        if wA[0] <= 0:
            raise NotPositiveDefiniteError("A must be positive definite")
        if np.linalg.eigvalsh(D)[0] < -1e-12 * max(1.0, np.abs(D).max()):
            raise ValueError("D must be positive semidefinite")
        if sigma < 0 or radius <= 0:
            raise ValueError("sigma must be >= 0 and radius > 0")
        self.A, self.B, self.c, self.D = sym(A), B, c, sym(D)
        self.m, self.n = m, n
        self.sigma = float(sigma)
        self.radius = float(radius)
        self.upper = Euclidean(m)
        self.lower = Euclidean(n)
        self._Ainv = np.linalg.inv(self.A)
        self.meta = self._meta(wA)
        self.oracles = self._oracles()

    # closed forms -------------------------------------------------------
    def y_star(self, x) -> np.ndarray:
        x = _arr(x)
        return np.linalg.solve(self.A, self.B @ x + self.c)

    def phi(self, x) -> float:
        x = _arr(x)
        y = self.y_star(x)
        return 0.5 * float(y @ y) + 0.5 * float(x @ self.D @ x)

    def grad_phi(self, x) -> np.ndarray:
        x = _arr(x)
        return self.D @ x + self.B.T @ np.linalg.solve(self.A, self.y_star(x))

    def phi_hessian(self) -> np.ndarray:
        G = self._Ainv @ self.B
        return sym(self.D + G.T @ G)

    def phi_lipschitz(self) -> float:
        """Exact Lipschitz constant of ``grad Phi`` (largest Hessian eigenvalue)."""
        return float(np.linalg.eigvalsh(self.phi_hessian())[-1])

    def check_closed_form(self, x=None, h: float = 1e-5) -> float:
        """Relative error of ``grad_phi`` against central differences of ``phi``."""
        if x is None:
            x = np.random.default_rng(12345).standard_normal(self.m)
        x = _arr(x)
        fd = np.empty(self.m)
        for i in range(self.m):
            e = np.zeros(self.m)
            e[i] = h
            fd[i] = (self.phi(x + e) - self.phi(x - e)) / (2 * h)
        g = self.grad_phi(x)
        return float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-300))

    # constants ----------------------------------------------------------
    def _meta(self, wA) -> SmoothnessMeta:
        m, n = self.m, self.n
        joint = np.zeros((m + n, m + n))
        joint[:m, m:] = -self.B.T
        joint[m:, :m] = -self.B
        joint[m:, m:] = self.A
        l_g1 = float(np.linalg.norm(joint, 2))
        nD = float(np.linalg.norm(self.D, 2)) if m else 0.0
        nB = float(np.linalg.norm(self.B, 2))
        R = self.radius
        y_bound = (nB * R + float(np.linalg.norm(self.c))) / wA[0] + R
        return SmoothnessMeta(
            mu=float(wA[0]),
            l_f0=math.hypot(nD * R, y_bound),
            l_f1=max(nD, 1.0),
            l_g1=max(l_g1, float(wA[-1])),
            l_g2=0.0,
            sigma2=self.sigma**2 * max(m, n),
        )

    # oracle bundle ------------------------------------------------------
    def _oracles(self) -> BilevelOracles:
        A, B, c, D, s = self.A, self.B, self.c, self.D, self.sigma
        U, L = self.upper, self.lower
        n, m = self.n, self.m

        def f(x, y):
            return 0.5 * float(y.payload @ y.payload) + 0.5 * float(x.payload @ D @ x.payload)

        def g(x, y):
            yy = y.payload
            return 0.5 * float(yy @ A @ yy) - float(yy @ (B @ x.payload + c))

        def grad_x_f(x, y):
            return TangentVector(x, D @ x.payload)

        def grad_y_f(x, y):
            return TangentVector(y, y.payload.copy())

        def grad_y_g(x, y):
            return TangentVector(y, A @ y.payload - B @ x.payload - c)

        def hvp(x, y, v):
            return TangentVector(y, A @ v.payload)

        def cross_apply(x, y, v):
            return TangentVector(x, -(B.T @ v.payload))

        def cross_adjoint_apply(x, y, xi):
            return TangentVector(y, -(B @ xi.payload))

        # samplers: the deterministic value plus sigma times standard noise;
        # with sigma = 0 the added term is exactly zero.
        def sample_grad_y_G(x, y, rng):
            return TangentVector(y, (A @ y.payload - B @ x.payload - c) + s * rng.standard_normal(n))

        def sample_grad_F(x, y, rng):
            gx = D @ x.payload + s * rng.standard_normal(m)
            gy = y.payload + s * rng.standard_normal(n)
            return TangentVector(x, gx), TangentVector(y, gy)

        def sample_hvp_G(x, y, v, rng):
            E = sym(rng.standard_normal((n, n))) / math.sqrt(n)
            return TangentVector(y, A @ v.payload + s * (E @ v.payload))

        def sample_cross_G(x, y, v, rng):
            E = rng.standard_normal((n, m)) / math.sqrt(max(m, n))
            return TangentVector(x, -(B.T @ v.payload) - s * (E.T @ v.payload))

        return BilevelOracles(
            upper=U,
            lower=L,
            f=f,
            g=g,
            grad_x_f=grad_x_f,
            grad_y_f=grad_y_f,
            grad_y_g=grad_y_g,
            hvp=hvp,
            cross_apply=cross_apply,
            cross_adjoint_apply=cross_adjoint_apply,
            meta=self.meta,
            sample_grad_y_G=sample_grad_y_G,
            sample_grad_F=sample_grad_F,
            sample_hvp_G=sample_hvp_G,
            sample_cross_G=sample_cross_G,
        )


def _arr(x) -> np.ndarray:
    return x.payload if isinstance(x, ManifoldPoint) else np.asarray(x, dtype=np.float64)


def make_toy_quadratic(
    m: int,
    n: int,
    kappa_target: float = 10.0,
    seed=0,
    sigma: float = 0.0,
    radius: float = 2.0,
    check: bool = True,
) -> ToyQuadratic:
    """Random toy quadratic with lower Hessian spectrum ``linspace(1, kappa_target, n)``.

    ``B`` is scaled to unit spectral norm and ``D`` has eigenvalues in
    ``[0.5, 1]``.  With ``check`` the analytic hypergradient is compared with
    finite differences of ``Phi`` and a ``RuntimeError`` raised on mismatch.
    """
    m = _check_dim("m", m)
    n = _check_dim("n", n)
    if not kappa_target >= 1:
        raise ValueError("kappa_target must be >= 1")
    rng = np.random.default_rng(seed)
    spec = np.linspace(1.0, kappa_target, n) if n > 1 else np.array([1.0])
    QA = random_orthogonal(n, rng)
    A = (QA * spec) @ QA.T
    B = rng.standard_normal((n, m))
    B /= np.linalg.norm(B, 2)
    c = rng.standard_normal(n)
    QD = random_orthogonal(m, rng)
    D = (QD * rng.uniform(0.5, 1.0, m)) @ QD.T
    toy = ToyQuadratic(A, B, c, D, sigma=sigma, radius=radius)
    if check:
        err = toy.check_closed_form(rng.standard_normal(m))
        if err > 1e-6:
            raise RuntimeError(f"toy quadratic closed form fails the FD check (rel err {err:.2e})")
    return toy


# ---------------------------------------------------------------------------
# data generation


def generate_spd_data(d: int, n: int, conditioning: float = 10.0, seed=0) -> np.ndarray:
    """``n`` SPD matrices ``Q diag(lam) Q^T`` with ``lam`` uniform in ``[1, conditioning]``.

    Returns an array of shape ``(n, d, d)``.
    """
    d = _check_dim("d", d)
    n = _check_dim("n", n)
    if not conditioning >= 1:
        raise ValueError("conditioning must be >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty((n, d, d))
    for i in range(n):
        lam = 1.0 + (conditioning - 1.0) * rng.random(d)
        Q = random_orthogonal(d, rng)
        out[i] = sym((Q * lam) @ Q.T)
    return out


def generate_gaussian_data(d: int, n: int, seed=0, true_cov=None) -> np.ndarray:
    """``n`` samples of ``N(0, true_cov)`` as rows of a ``(n, d)`` array."""
    d = _check_dim("d", d)
    n = _check_dim("n", n)
    cov = np.eye(d) if true_cov is None else np.asarray(true_cov, dtype=np.float64)
    if cov.shape != (d, d):
        raise ValueError(f"true_cov has shape {cov.shape}, expected {(d, d)}")
    L = np.linalg.cholesky(cov)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d)) @ L.T


# ---------------------------------------------------------------------------
# robust problems

KINDS = ("karcher", "mle")


@dataclass(frozen=True, eq=False)
class RobustInstance:
    """Data and regularization weight of a robust SPD problem.

    ``data`` is ``(n, d, d)`` SPD matrices for ``kind="karcher"`` or ``(n, d)``
    sample vectors for ``kind="mle"``.  ``seed`` and ``conditioning`` record
    how the data was generated, if it was.
    """

    kind: str
    data: np.ndarray
    lam: float = 1.0
    seed: Optional[int] = None
    conditioning: Optional[float] = None
    _terms: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown robust problem kind {self.kind!r}")
        data = np.array(self.data, dtype=np.float64)
        if not np.isfinite(data).all():
            raise ValueError("robust data must be finite")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if self.kind == "karcher":
            if data.ndim != 3 or data.shape[1] != data.shape[2] or data.shape[0] < 1:
                raise ValueError("Karcher data must have shape (n, d, d)")
            terms = tuple(KarcherTerm(A) for A in data)
        else:
            if data.ndim != 2 or data.shape[0] < 1:
                raise ValueError("MLE data must have shape (n, d)")
            terms = ()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "_terms", terms)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def lower(self) -> SPD:
        return SPD(self.d)

    @property
    def upper(self) -> SimplexSet:
        return SimplexSet(self.n)

    # serialization ------------------------------------------------------
    def to_dict(self, inline: bool = False) -> dict:
        doc = {"kind": self.kind, "d": self.d, "n": self.n, "lambda": self.lam}
        if self.seed is not None and not inline:
            doc["seed"] = self.seed
            doc["conditioning"] = self.conditioning
        else:
            doc["data"] = self.data.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RobustInstance":
        allowed = {"kind", "d", "n", "lambda", "seed", "conditioning", "data"}
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown instance keys: {sorted(unknown)}")
        lam = doc.get("lambda", 1.0)
        if "data" in doc:
            inst = cls(doc["kind"], np.asarray(doc["data"]), lam)
            for key in ("d", "n"):
                if key in doc and doc[key] != getattr(inst, key):
                    raise ValueError(f"{key}={doc[key]} does not match the inline data")
            return inst
        return make_robust_instance(
            doc["kind"], doc["d"], doc["n"], lam=lam, conditioning=doc.get("conditioning"), seed=doc["seed"]
        )

    # per-datum pieces ---------------------------------------------------
    def _weights(self, w) -> np.ndarray:
        w = _arr(w)
        if w.shape != (self.n,):
            raise ValueError(f"weight vector has shape {w.shape}, expected ({self.n},)")
        return w

    def _point(self, S) -> ManifoldPoint:
        if isinstance(S, ManifoldPoint):
            if S.manifold != self.lower:
                raise ManifoldError(f"expected a point on {self.lower.name}, got {S.manifold.name}")
            return S
        return self.lower.point(S)

    def _karcher(self, S: ManifoldPoint):
        key = ("karcher", id(self))
        cached = S._cache.get(key)
        if cached is None:
            cached = S._cache[key] = [KarcherHessian(S, t) for t in self._terms]
        return cached

    def _mle(self, S: ManifoldPoint):
        key = ("mle", id(self))
        cached = S._cache.get(key)
        if cached is None:
            Sinv = self.lower.inverse(S)
            sign, logdet = np.linalg.slogdet(S.payload)
            if sign <= 0:
                raise NotPositiveDefiniteError("covariance is not positive definite")
            Z = self.data @ Sinv
            quad = np.einsum("ij,ij->i", Z, self.data)
            cached = S._cache[key] = (Sinv, Z, 0.5 * logdet + 0.5 * quad)
        return cached

    def losses(self, S) -> np.ndarray:
        """Vector of per-datum losses ``l_i(S)``."""
        S = self._point(S)
        if self.kind == "karcher":
            return np.array([kh.loss() for kh in self._karcher(S)])
        return self._mle(S)[2].copy()

    def egrads(self, S) -> np.ndarray:
        """Per-datum Euclidean gradients, shape ``(n, d, d)``."""
        S = self._point(S)
        if self.kind == "karcher":
            return np.array([kh.egrad() for kh in self._karcher(S)])
        Sinv, Z, _ = self._mle(S)
        return 0.5 * Sinv[None] - 0.5 * Z[:, :, None] * Z[:, None, :]

    def lower_value(self, w, S) -> float:
        return float(self._weights(w) @ self.losses(S))

    def lower_grad(self, w, S) -> TangentVector:
        """Riemannian gradient of ``sum_i w_i l_i`` at ``S``."""
        w = self._weights(w)
        S = self._point(S)
        if self.kind == "mle":
            # S (1/2 S^-1 - 1/2 S^-1 x x^T S^-1) S summed with weights
            M = (self.data.T * w) @ self.data
            return TangentVector(S, sym(0.5 * w.sum() * S.payload - 0.5 * M))
        G = np.tensordot(w, self.egrads(S), axes=1)
        return TangentVector(S, sym(S.payload @ G @ S.payload))

    def lower_hessian(self, w, S):
        """Return ``V -> H_S g(w, S)[V]`` reusing factorizations at ``S``."""
        w = self._weights(w)
        S = self._point(S)
        Sm = S.payload
        if self.kind == "mle":
            Sinv = self._mle(S)[0]
            MS = (self.data.T * w) @ self.data @ Sinv
            # the metric terms cancel, leaving H[V] = 1/2 sym(M S^-1 V)
            return lambda V: TangentVector(S, sym(0.5 * (MS @ _tp(V))))
        khs = self._karcher(S)
        active = [(wi, kh) for wi, kh in zip(w, khs) if wi != 0.0]
        G = sum(wi * kh.egrad() for wi, kh in active) if active else np.zeros_like(Sm)
        SG = Sm @ G

        def apply(V):
            Vm = _tp(V)
            E = sum(wi * kh.ehess(Vm) for wi, kh in active) if active else np.zeros_like(Sm)
            return TangentVector(S, sym(Sm @ E @ Sm) + sym(SG @ Vm))

        return apply

    def lower_hvp(self, w, S, V) -> TangentVector:
        return self.lower_hessian(w, S)(V)

    def upper_value(self, w, S) -> float:
        w = self._weights(w)
        r = w - 1.0 / self.n
        return self.lam * float(r @ r) - float(w @ self.losses(S))

    def upper_grad(self, w, S) -> np.ndarray:
        """``2 lam (w - 1/n) - (l_1(S), ..., l_n(S))``."""
        w = self._weights(w)
        return 2.0 * self.lam * (w - 1.0 / self.n) - self.losses(S)

    def cross_apply(self, w, S, V) -> np.ndarray:
        """Entries ``<grad l_i(S), V>_S = tr(egrad_i V)``."""
        self._weights(w)
        S = self._point(S)
        Vm = _tp(V)
        if self.kind == "mle":
            Sinv, Z, _ = self._mle(S)
            return 0.5 * np.sum(Sinv * Vm) - 0.5 * np.einsum("ij,jk,ik->i", Z, Vm, Z)
        return np.einsum("ijk,jk->i", self.egrads(S), Vm)

    def cross_adjoint(self, w, S, u) -> TangentVector:
        """``sum_i u_i grad l_i(S)`` as a tangent vector at ``S``."""
        self._weights(w)
        S = self._point(S)
        u = np.asarray(_tp(u), dtype=np.float64)
        if u.shape != (self.n,):
            raise ValueError(f"cross_adjoint expects {self.n} coefficients, got shape {u.shape}")
        if self.kind == "mle":
            M = (self.data.T * u) @ self.data
            return TangentVector(S, sym(0.5 * u.sum() * S.payload - 0.5 * M))
        G = np.tensordot(u, self.egrads(S), axes=1)
        return TangentVector(S, sym(S.payload @ G @ S.payload))

    # reference lower solution ------------------------------------------
    def lower_solution(self, w, tol: float = 1e-12, max_iter: int = 500) -> ManifoldPoint:
        """Minimizer of ``sum_i w_i l_i`` over SPD.

        Closed form ``sum_i w_i x_i x_i^T / sum_i w_i`` for MLE; for Karcher the
        fixed-point iteration ``S <- Exp_S(sum_i w_i Log_S A_i / sum_i w_i)``.
        """
        w = self._weights(w)
        tot = w.sum()
        if tot <= 0:
            raise ValueError("weights must have a positive sum")
        M = self.lower
        if self.kind == "mle":
            return M.point(sym((self.data.T * (w / tot)) @ self.data))
        S = M.point(sym(np.tensordot(w / tot, self.data, axes=1)))
        for _ in range(max_iter):
            step = M.zero(S)
            for wi, A in zip(w / tot, self.data):
                if wi:
                    step = step.axpy(wi, M.log(S, M.point(A, check=False)))
            S_next = M.exp(S, step)
            if M.norm(S, step) <= tol:
                return S_next
            S = S_next
        return S

    def estimate_meta(self, safety: float = 2.0) -> SmoothnessMeta:
        """Constants from the dense lower Hessian at the uniform-weight solution.

        ``mu`` and ``l_g1`` are the extreme Hessian eigenvalues divided and
        multiplied by ``safety``; ``l_f0`` is ``safety`` times the upper
        gradient norm there.
        """
        w = np.full(self.n, 1.0 / self.n)
        S = self.lower_solution(w)
        H = self.lower_hessian(w, S)
        M = self.lower
        basis = M.tangent_basis(S)
        dense = np.array([M.to_coords(S, H(b)) for b in basis])
        ev = np.linalg.eigvalsh(sym(dense))
        if ev[0] <= 0:
            raise NotPositiveDefiniteError("lower Hessian is not positive definite at the reference solution")
        gx = self.upper_grad(w, S)
        gy = self.lower_grad(w, S)
        l_f0 = safety * math.hypot(float(np.linalg.norm(gx)), M.norm(S, gy))
        return SmoothnessMeta(
            mu=float(ev[0]) / safety,
            l_f0=l_f0,
            l_f1=max(2.0 * self.lam, float(ev[-1])) * safety,
            l_g1=float(ev[-1]) * safety,
            l_g2=0.0,
        )


def _tp(V):
    return V.payload if isinstance(V, TangentVector) else V


def make_robust_instance(
    kind: str,
    d: int,
    n: int,
    lam: float = 1.0,
    conditioning: Optional[float] = None,
    seed: int = 0,
) -> RobustInstance:
    """Synthetic robust instance.

    Karcher: ``n`` SPD matrices with spectra in ``[1, conditioning]``.
    MLE: ``n`` Gaussian samples with a random covariance of the given
    conditioning.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown robust problem kind {kind!r}")
    d = _check_dim("d", d)
    n = _check_dim("n", n)
    if conditioning is None:
        conditioning = 10.0
    if kind == "karcher":
        data = generate_spd_data(d, n, conditioning, seed)
    else:
        cov_seed, sample_seed = np.random.SeedSequence(seed).spawn(2)
        cov = generate_spd_data(d, 1, conditioning, cov_seed)[0]
        data = generate_gaussian_data(d, n, sample_seed, cov)
    return RobustInstance(kind, data, lam, seed=seed, conditioning=float(conditioning))


def robust_oracles(instance: RobustInstance, meta: Optional[SmoothnessMeta] = None) -> BilevelOracles:
    """Bilevel oracle bundle with the simplex weights as upper variable."""
    inst = instance
    meta = inst.estimate_meta() if meta is None else meta

    def grad_x_f(w, S):
        return TangentVector(w, inst.upper_grad(w, S))

    def grad_y_f(w, S):
        return -inst.lower_grad(w, S)

    def cross_apply(w, S, V):
        return TangentVector(w, inst.cross_apply(w, S, V))

    def cross_adjoint_apply(w, S, u):
        return inst.cross_adjoint(w, S, u)

    return BilevelOracles(
        upper=inst.upper,
        lower=inst.lower,
        f=inst.upper_value,
        g=inst.lower_value,
        grad_x_f=grad_x_f,
        grad_y_f=grad_y_f,
        grad_y_g=inst.lower_grad,
        hvp=inst.lower_hvp,
        cross_apply=cross_apply,
        cross_adjoint_apply=cross_adjoint_apply,
        meta=meta,
        hessian_operator=inst.lower_hessian,
    )


def robust_lower_oracles(instance: RobustInstance, w):
    """``(g, grad_S g, hvp_S)`` for fixed weights ``w``, each taking ``S`` first."""
    w = instance._weights(w)
    return (
        lambda S: instance.lower_value(w, S),
        lambda S: instance.lower_grad(w, S),
        lambda S, V: instance.lower_hvp(w, S, V),
    )


def robust_upper_grad(instance: RobustInstance, w, S) -> np.ndarray:
    return instance.upper_grad(w, S)


def robust_cross_apply(instance: RobustInstance, w, S, V) -> np.ndarray:
    return instance.cross_apply(w, S, V)


def robust_cross_adjoint(instance: RobustInstance, w, S, u) -> TangentVector:
    return instance.cross_adjoint(w, S, u)

"""Manifold geometry: points, tangent vectors and concrete manifolds.

Concrete geometries are :class:`Euclidean`, :class:`SPD` (affine-invariant
metric), :class:`Product` and :class:`SimplexSet`.  The simplex is a convex
constraint set in Euclidean space, not a Riemannian manifold: it carries the
ambient inner product but no exponential/log map or transport.

Points and tangents are thin immutable wrappers around float64 arrays.  The
module-level functions (:func:`exp_map`, :func:`log_map`, ...) dispatch on the
point's manifold.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
import scipy.linalg

from .errors import (
    BasePointMismatchError,
    ManifoldError,
    NonFiniteError,
    NotPositiveDefiniteError,
    UnsupportedOperationError,
)
from .linalg import sym, sym_eigen

__all__ = [
    "ManifoldPoint",
    "TangentVector",
    "SmoothnessMeta",
    "Manifold",
    "Euclidean",
    "SPD",
    "Product",
    "SimplexSet",
    "exp_map",
    "log_map",
    "distance",
    "inner",
    "norm",
    "parallel_transport",
    "product_manifold",
    "fd_directional_derivative",
    "fd_second_derivative",
]


def _finite(arr) -> bool:
    if isinstance(arr, tuple):
        return all(_finite(a) for a in arr)
    return bool(np.isfinite(arr).all())


def _same_payload(a, b) -> bool:
    if a is b:
        return True
    if isinstance(a, tuple):
        return isinstance(b, tuple) and len(a) == len(b) and all(
            _same_payload(x, y) for x, y in zip(a, b)
        )
    return a.shape == b.shape and np.array_equal(a, b)


class ManifoldPoint:
    """A point on ``manifold``.

    ``payload`` is a float64 array (a pair of arrays for product manifolds).
    SPD points cache the matrix factorizations that geometry operations
    need, so repeated maps at the same point factor it once.
    """

    __slots__ = ("manifold", "payload", "_cache")

    def __init__(self, manifold: "Manifold", payload):
        self.manifold = manifold
        self.payload = payload
        self._cache = {}

    @property
    def manifold_id(self) -> str:
        return self.manifold.name

    def same_as(self, other: "ManifoldPoint") -> bool:
        return self is other or (
            self.manifold == other.manifold and _same_payload(self.payload, other.payload)
        )

    def __repr__(self):
        return f"ManifoldPoint({self.manifold.name}, {self.payload!r})"


class TangentVector:
    """Tangent vector anchored at ``base``.

    Supports ``+``, ``-``, negation and scalar multiplication; combining two
    vectors requires the same base point.
    """

    __slots__ = ("base", "payload")

    def __init__(self, base: ManifoldPoint, payload):
        self.base = base
        self.payload = payload

    @property
    def manifold(self) -> "Manifold":
        return self.base.manifold

    def _check(self, other: "TangentVector"):
        if not isinstance(other, TangentVector):
            return NotImplemented
        if not self.base.same_as(other.base):
            raise BasePointMismatchError("tangent vectors live at different base points")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return TangentVector(self.base, _lincomb(1.0, self.payload, 1.0, other.payload))

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return TangentVector(self.base, _lincomb(1.0, self.payload, -1.0, other.payload))

    def __neg__(self):
        return TangentVector(self.base, _scale(-1.0, self.payload))

    def __mul__(self, scalar):
        if isinstance(scalar, TangentVector):
            return NotImplemented
        return TangentVector(self.base, _scale(float(scalar), self.payload))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return TangentVector(self.base, _scale(1.0 / float(scalar), self.payload))

    def axpy(self, a: float, other: "TangentVector") -> "TangentVector":
        """Return ``self + a * other``."""
        self._check(other)
        return TangentVector(self.base, _lincomb(1.0, self.payload, a, other.payload))

    def __repr__(self):
        return f"TangentVector(at {self.base.manifold.name}, {self.payload!r})"


def _scale(a, x):
    if isinstance(x, tuple):
        return tuple(_scale(a, xi) for xi in x)
    return a * x


def _lincomb(a, x, b, y):
    if isinstance(x, tuple):
        return tuple(_lincomb(a, xi, b, yi) for xi, yi in zip(x, y))
    return a * x + b * y


@dataclass(frozen=True)
class SmoothnessMeta:
    """Problem constants for the lower/upper objectives.

    ``mu`` is the strong-convexity modulus of the lower problem, ``l_f0`` the
    Lipschitz constant of the upper objective, ``l_f1``/``l_g1`` gradient
    Lipschitz constants, ``l_g2`` the Lipschitz constant of the second-order
    derivatives of ``g`` and ``sigma2`` the variance bound of the stochastic
    oracles.
    """

    mu: float
    l_f0: float = 0.0
    l_f1: float = 0.0
    l_g1: float = 1.0
    l_g2: float = 0.0
    sigma2: float = 0.0

    def __post_init__(self):
        vals = (self.mu, self.l_f0, self.l_f1, self.l_g1, self.l_g2, self.sigma2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("smoothness constants must be finite")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if min(self.l_f0, self.l_f1, self.l_g1, self.l_g2, self.sigma2) < 0:
            raise ValueError("smoothness constants must be nonnegative")
        if self.l_g1 < self.mu:
            raise ValueError("l_g1 must be >= mu (kappa >= 1)")

    @property
    def kappa(self) -> float:
        return self.l_g1 / self.mu

    def phi_smoothness(self) -> float:
        """Upper bound on the Lipschitz constant of the hypergradient."""
        k = self.kappa
        root = math.sqrt(1.0 + k * k)
        mu = self.mu
        return (
            self.l_f1 * root
            + self.l_g2 * self.l_f0 / mu
            + self.l_g1 * (self.l_f0 * self.l_g2 * root / mu**2 + self.l_f1 / mu)
        )


class Manifold:
    """Interface shared by all geometries.

    Subclasses implement the array-level methods (``_inner``, ``_exp`` ...);
    the public methods take and return :class:`ManifoldPoint` /
    :class:`TangentVector` objects and enforce base-point consistency.
    """

    name = "manifold"
    #: payload shape of a point
    shape: tuple = ()

    def __eq__(self, other):
        return type(self) is type(other) and self.name == other.name

    def __hash__(self):
        return hash((type(self).__name__, self.name))

    def __repr__(self):
        return self.name

    # construction -------------------------------------------------------
    def point(self, payload, check: bool = True) -> ManifoldPoint:
        payload = self._as_payload(payload)
        if check:
            self.validate_point(payload)
        return ManifoldPoint(self, payload)

    def tangent(self, base: ManifoldPoint, payload, check: bool = True) -> TangentVector:
        self._check_point(base)
        payload = self._as_payload(payload)
        if check:
            self.validate_tangent(payload)
        return TangentVector(base, payload)

    def zero(self, p: ManifoldPoint) -> TangentVector:
        return TangentVector(p, _scale(0.0, p.payload))

    def _as_payload(self, payload):
        arr = np.array(payload, dtype=np.float64)
        if arr.shape != self.shape:
            raise ManifoldError(f"{self.name}: expected shape {self.shape}, got {arr.shape}")
        return arr

    def validate_point(self, payload) -> None:
        if not _finite(payload):
            raise NonFiniteError(f"{self.name}: non-finite point")

    def validate_tangent(self, payload) -> None:
        if not _finite(payload):
            raise NonFiniteError(f"{self.name}: non-finite tangent vector")

    def _check_point(self, p: ManifoldPoint) -> None:
        if p.manifold != self:
            raise ManifoldError(f"point belongs to {p.manifold.name}, not {self.name}")

    def _check_tangent(self, p: ManifoldPoint, v: TangentVector) -> None:
        self._check_point(p)
        if not v.base.same_as(p):
            raise BasePointMismatchError("tangent vector is not based at the given point")

    # geometry -----------------------------------------------------------
    def inner(self, p, u, v) -> float:
        self._check_tangent(p, u)
        self._check_tangent(p, v)
        return float(self._inner(p, u.payload, v.payload))

    def norm(self, p, v) -> float:
        self._check_tangent(p, v)
        return math.sqrt(max(self._inner(p, v.payload, v.payload), 0.0))

    def exp(self, p, v) -> ManifoldPoint:
        self._check_tangent(p, v)
        if not _finite(v.payload):
            raise NonFiniteError(f"{self.name}: non-finite tangent in exp")
        return ManifoldPoint(self, self._exp(p, v.payload))

    def log(self, p, q) -> TangentVector:
        self._check_point(p)
        self._check_point(q)
        if not (_finite(p.payload) and _finite(q.payload)):
            raise NonFiniteError(f"{self.name}: non-finite point in log")
        return TangentVector(p, self._log(p, q))

    def dist(self, p, q) -> float:
        self._check_point(p)
        self._check_point(q)
        if not (_finite(p.payload) and _finite(q.payload)):
            raise NonFiniteError(f"{self.name}: non-finite point in dist")
        return float(self._dist(p, q))

    def transport(self, p, q, v) -> TangentVector:
        self._check_tangent(p, v)
        self._check_point(q)
        if p.same_as(q):
            return TangentVector(q, v.payload)
        return TangentVector(q, self._transport(p, q, v.payload))

    def tangent_basis(self, p) -> list:
        """Orthonormal basis of the tangent space at ``p`` (in the metric)."""
        raise UnsupportedOperationError(f"{self.name}: no tangent basis")

    def to_coords(self, p, v) -> np.ndarray:
        """Coordinates of ``v`` in :meth:`tangent_basis`."""
        return np.array([self._inner(p, b.payload, v.payload) for b in self.tangent_basis(p)])

    def from_coords(self, p, c) -> TangentVector:
        basis = self.tangent_basis(p)
        out = _scale(0.0, basis[0].payload)
        for ci, b in zip(c, basis):
            out = _lincomb(1.0, out, float(ci), b.payload)
        return TangentVector(p, out)

    def random_point(self, rng) -> ManifoldPoint:
        raise UnsupportedOperationError(f"{self.name}: no random points")

    def random_tangent(self, p, rng, unit: bool = False) -> TangentVector:
        raise UnsupportedOperationError(f"{self.name}: no random tangents")

    # defaults overridden by subclasses
    def _inner(self, p, u, v):
        raise NotImplementedError

    def _exp(self, p, v):
        raise UnsupportedOperationError(f"{self.name}: exponential map is not defined")

    def _log(self, p, q):
        raise UnsupportedOperationError(f"{self.name}: logarithm map is not defined")

    def _dist(self, p, q):
        return math.sqrt(max(self._inner(p, self._log(p, q), self._log(p, q)), 0.0))

    def _transport(self, p, q, v):
        raise UnsupportedOperationError(f"{self.name}: parallel transport is not defined")


class Euclidean(Manifold):
    """Flat space of arrays with the given shape."""

    def __init__(self, *shape: int):
        if not shape or any(int(s) < 1 for s in shape):
            raise ValueError("Euclidean dimensions must be positive")
        self.shape = tuple(int(s) for s in shape)
        self.dim = int(np.prod(self.shape))
        self.name = "R^" + "x".join(map(str, self.shape))

    def _inner(self, p, u, v):
        return float(np.vdot(u, v))

    def _exp(self, p, v):
        return p.payload + v

    def _log(self, p, q):
        return q.payload - p.payload

    def _dist(self, p, q):
        return float(np.linalg.norm(q.payload - p.payload))

    def _transport(self, p, q, v):
        return v

    def tangent_basis(self, p):
        eye = np.eye(self.dim)
        return [TangentVector(p, row.reshape(self.shape)) for row in eye]

    def to_coords(self, p, v):
        return np.asarray(v.payload, dtype=np.float64).reshape(-1).copy()

    def from_coords(self, p, c):
        return TangentVector(p, np.asarray(c, dtype=np.float64).reshape(self.shape).copy())

    def random_point(self, rng):
        return ManifoldPoint(self, rng.standard_normal(self.shape))

    def random_tangent(self, p, rng, unit=False):
        v = rng.standard_normal(self.shape)
        if unit:
            v /= np.linalg.norm(v)
        return TangentVector(p, v)


class SimplexSet(Euclidean):
    """The probability simplex as a constraint set in ``R^n``.

    Tangents are plain ambient vectors with the Euclidean inner product.  The
    exponential map, logarithm and transport are not defined here; updates
    are taken in ambient space and projected back (see
    :func:`riebo.solvers.project_simplex`).
    """

    def __init__(self, n: int):
        super().__init__(n)
        self.n = int(n)
        self.name = f"Simplex({self.n})"

    def validate_point(self, payload):
        super().validate_point(payload)
        if (payload < 0).any():
            raise ManifoldError("simplex point has negative entries")
        if abs(payload.sum() - 1.0) > 1e-12:
            raise ManifoldError(f"simplex point sums to {payload.sum()!r}, not 1")

    def _exp(self, p, v):
        raise UnsupportedOperationError("simplex set: exponential map is not defined")

    def _log(self, p, q):
        raise UnsupportedOperationError("simplex set: logarithm map is not defined")

    def _transport(self, p, q, v):
        raise UnsupportedOperationError("simplex set: parallel transport is not defined")

    def random_point(self, rng):
        return ManifoldPoint(self, rng.dirichlet(np.ones(self.n)))

    def uniform(self) -> ManifoldPoint:
        return ManifoldPoint(self, np.full(self.n, 1.0 / self.n))


class SPD(Manifold):
    """Symmetric positive definite ``d x d`` matrices, affine-invariant metric.

    ``<U, V>_S = tr(S^-1 U S^-1 V)``, ``dist(A, B) = ||log(A^-1/2 B A^-1/2)||_F``.
    """

    def __init__(self, d: int):
        if int(d) < 1:
            raise ValueError("SPD dimension must be positive")
        self.d = int(d)
        self.shape = (self.d, self.d)
        self.dim = self.d * (self.d + 1) // 2
        self.name = f"SPD({self.d})"

    def validate_point(self, payload):
        super().validate_point(payload)
        scale = np.abs(payload).max()
        if np.abs(payload - payload.T).max() > 1e-12 * scale:
            raise ManifoldError("SPD point is not symmetric")
        lmin = np.linalg.eigvalsh(payload)[0]
        if not lmin > 0:
            raise NotPositiveDefiniteError(f"SPD point has min eigenvalue {lmin:.3e}")

    def validate_tangent(self, payload):
        super().validate_tangent(payload)
        scale = max(np.abs(payload).max(), 1e-300)
        if np.abs(payload - payload.T).max() > 1e-12 * scale:
            raise ManifoldError("SPD tangent vector is not symmetric")

    def factors(self, p: ManifoldPoint):
        """Return ``(S^1/2, S^-1/2, S^-1)`` for ``p``, cached on the point."""
        cache = p._cache
        f = cache.get("factors")
        if f is None:
            w, Q = np.linalg.eigh(p.payload)
            if not w[0] > 0:
                raise NotPositiveDefiniteError(f"SPD point has min eigenvalue {w[0]:.3e}")
            r = np.sqrt(w)
            half = sym((Q * r) @ Q.T)
            ihalf = sym((Q / r) @ Q.T)
            inv = sym((Q / w) @ Q.T)
            f = cache["factors"] = (half, ihalf, inv)
        return f

    def cholesky(self, p: ManifoldPoint):
        """Return ``(L, L^-1)`` with ``S = L L^T``, cached on the point.

        The affine-invariant maps are unchanged when ``S^1/2`` is replaced by
        any factor ``L`` of ``S``, and a Cholesky factor is much cheaper than
        an eigendecomposition.
        """
        f = p._cache.get("cholesky")
        if f is None:
            try:
                L = np.linalg.cholesky(p.payload)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError(f"SPD point is not positive definite: {exc}") from exc
            Linv = scipy.linalg.solve_triangular(L, np.eye(self.d), lower=True)
            f = p._cache["cholesky"] = (L, Linv)
        return f

    def inverse(self, p: ManifoldPoint) -> np.ndarray:
        """``S^-1``, cached on the point."""
        inv = p._cache.get("inverse")
        if inv is None:
            Linv = self.cholesky(p)[1]
            inv = p._cache["inverse"] = Linv.T @ Linv
        return inv

    def _congruence(self, p, q):
        # eigendecomposition of L^-1 Q L^-T
        L, Linv = self.cholesky(p)
        return L, Linv, np.linalg.eigh(sym(Linv @ q @ Linv.T))

    def _inner(self, p, u, v):
        inv = self.inverse(p)
        a = inv @ u
        b = inv @ v
        return float(np.sum(a * b.T))

    def _exp(self, p, v):
        L, _, (w, Q) = self._congruence(p, v)
        E = L @ Q
        return sym((E * np.exp(w)) @ E.T)

    def _log(self, p, q):
        L, _, (w, Q) = self._congruence(p, q.payload)
        if not w[0] > 0:
            raise NotPositiveDefiniteError("log map target is not positive definite")
        E = L @ Q
        return sym((E * np.log(w)) @ E.T)

    def _dist(self, p, q):
        Linv = self.cholesky(p)[1]
        w = np.linalg.eigvalsh(sym(Linv @ q.payload @ Linv.T))
        if not w[0] > 0:
            raise NotPositiveDefiniteError("distance target is not positive definite")
        return float(np.sqrt(np.sum(np.log(w) ** 2)))

    def _transport(self, p, q, v):
        # E V E^T with E = (T S^-1)^1/2 = L (L^-1 T L^-T)^1/2 L^-1
        L, Linv, (w, Q) = self._congruence(p, q.payload)
        E = (L @ Q * np.sqrt(w)) @ (Linv.T @ Q).T
        return sym(E @ v @ E.T)

    def tangent_basis(self, p):
        half = self.factors(p)[0]
        d = self.d
        out = []
        r2 = 1.0 / math.sqrt(2.0)
        for i in range(d):
            for j in range(i, d):
                E = np.zeros((d, d))
                if i == j:
                    E[i, i] = 1.0
                else:
                    E[i, j] = E[j, i] = r2
                out.append(TangentVector(p, sym(half @ E @ half)))
        return out

    def to_coords(self, p, v):
        ihalf = self.factors(p)[1]
        W = ihalf @ v.payload @ ihalf
        i, j = np.triu_indices(self.d)
        return W[i, j] * np.where(i == j, 1.0, math.sqrt(2.0))

    def from_coords(self, p, c):
        half = self.factors(p)[0]
        i, j = np.triu_indices(self.d)
        vals = np.asarray(c, dtype=np.float64) * np.where(i == j, 1.0, 1.0 / math.sqrt(2.0))
        W = np.zeros((self.d, self.d))
        W[i, j] = vals
        W[j, i] = vals
        return TangentVector(p, sym(half @ W @ half))

    def random_point(self, rng, spread: float = 1.0):
        X = rng.standard_normal((self.d, self.d))
        V = spread * sym(X) / math.sqrt(self.d)
        w, Q = np.linalg.eigh(V)
        return ManifoldPoint(self, sym((Q * np.exp(w)) @ Q.T))

    def random_tangent(self, p, rng, unit=False):
        X = sym(rng.standard_normal((self.d, self.d)))
        v = TangentVector(p, X)
        if unit:
            v = v / self.norm(p, v)
        return v


class Product(Manifold):
    """Product of two manifolds with the product metric.

    Payloads are pairs ``(first, second)``; every operation applies
    componentwise and ``dist = sqrt(dist_1^2 + dist_2^2)``.
    """

    def __init__(self, first: Manifold, second: Manifold):
        self.first = first
        self.second = second
        self.shape = (first.shape, second.shape)
        self.dim = getattr(first, "dim", 0) + getattr(second, "dim", 0)
        self.name = f"{first.name} x {second.name}"

    def _as_payload(self, payload):
        if not isinstance(payload, (tuple, list)) or len(payload) != 2:
            raise ManifoldError("product payload must be a pair")
        return (self.first._as_payload(payload[0]), self.second._as_payload(payload[1]))

    def pair(self, a: ManifoldPoint, b: ManifoldPoint) -> ManifoldPoint:
        self.first._check_point(a)
        self.second._check_point(b)
        return ManifoldPoint(self, (a.payload, b.payload))

    def split(self, p: ManifoldPoint):
        parts = p._cache.get("parts")
        if parts is None:
            parts = p._cache["parts"] = (
                ManifoldPoint(self.first, p.payload[0]),
                ManifoldPoint(self.second, p.payload[1]),
            )
        return parts

    def validate_point(self, payload):
        self.first.validate_point(payload[0])
        self.second.validate_point(payload[1])

    def validate_tangent(self, payload):
        self.first.validate_tangent(payload[0])
        self.second.validate_tangent(payload[1])

    def _inner(self, p, u, v):
        a, b = self.split(p)
        return self.first._inner(a, u[0], v[0]) + self.second._inner(b, u[1], v[1])

    def _exp(self, p, v):
        a, b = self.split(p)
        return (self.first._exp(a, v[0]), self.second._exp(b, v[1]))

    def _log(self, p, q):
        a, b = self.split(p)
        c, d = self.split(q)
        return (self.first._log(a, c), self.second._log(b, d))

    def _dist(self, p, q):
        a, b = self.split(p)
        c, d = self.split(q)
        return math.hypot(self.first._dist(a, c), self.second._dist(b, d))

    def _transport(self, p, q, v):
        a, b = self.split(p)
        c, d = self.split(q)
        first = v[0] if a.same_as(c) else self.first._transport(a, c, v[0])
        second = v[1] if b.same_as(d) else self.second._transport(b, d, v[1])
        return (first, second)

    def random_point(self, rng):
        return self.pair(self.first.random_point(rng), self.second.random_point(rng))

    def random_tangent(self, p, rng, unit=False):
        a, b = self.split(p)
        v = TangentVector(
            p,
            (
                self.first.random_tangent(a, rng).payload,
                self.second.random_tangent(b, rng).payload,
            ),
        )
        if unit:
            v = v / self.norm(p, v)
        return v


def product_manifold(first: Manifold, second: Manifold) -> Product:
    return Product(first, second)


# module-level geometry ------------------------------------------------------


def exp_map(p: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    return p.manifold.exp(p, v)


def log_map(p: ManifoldPoint, q: ManifoldPoint) -> TangentVector:
    return p.manifold.log(p, q)


def distance(p: ManifoldPoint, q: ManifoldPoint) -> float:
    return p.manifold.dist(p, q)


def inner(p: ManifoldPoint, u: TangentVector, v: TangentVector) -> float:
    return p.manifold.inner(p, u, v)


def norm(p: ManifoldPoint, v: TangentVector) -> float:
    return p.manifold.norm(p, v)


def parallel_transport(p: ManifoldPoint, q: ManifoldPoint, v: TangentVector) -> TangentVector:
    return p.manifold.transport(p, q, v)


def fd_directional_derivative(f, p: ManifoldPoint, v: TangentVector, h: float = 1e-5) -> float:
    """Central difference of ``f`` along the geodesic through ``p`` with velocity ``v``."""
    if not h > 0:
        raise ValueError("step h must be positive")
    M = p.manifold
    fp = f(M.exp(p, h * v))
    fm = f(M.exp(p, -h * v))
    return (fp - fm) / (2.0 * h)


def fd_second_derivative(f, p: ManifoldPoint, v: TangentVector, h: float = 1e-4) -> float:
    """Second central difference of ``t -> f(Exp_p(t v))`` at ``t = 0``."""
    if not h > 0:
        raise ValueError("step h must be positive")
    M = p.manifold
    return (f(M.exp(p, h * v)) - 2.0 * f(p) + f(M.exp(p, -h * v))) / (h * h)

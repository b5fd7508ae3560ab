"""Hypergradient estimators for Riemannian bilevel problems.

Notation: the upper variable ``x`` lives on ``oracles.upper``, the lower
variable ``y`` on ``oracles.lower``, and the hypergradient is

    grad Phi(x) = grad_x f(x, y*) - grad2_yx g(x, y*)[v*],   H_y g(x, y*)[v*] = grad_y f(x, y*).

Three estimators are provided: a dense exact solve (:func:`exact_hypergradient`),
conjugate gradient on the tangent space (:func:`aid_hypergradient`) and a
truncated Neumann series, either sampled (:func:`stochastic_hypergradient`)
or summed in full (:func:`deterministic_neumann_hypergradient`).
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Callable, Optional

import numpy as np

from .errors import BasePointMismatchError, NonFiniteError
from .manifolds import Manifold, ManifoldPoint, SmoothnessMeta, TangentVector

__all__ = [
    "BilevelOracles",
    "EstimatorConfig",
    "tangent_cg",
    "exact_hypergradient",
    "aid_hypergradient",
    "neumann_inverse_apply",
    "neumann_partial_sum",
    "stochastic_hypergradient",
    "deterministic_neumann_hypergradient",
    "neumann_bias_bound",
    "adjointness_check",
]


@dataclass
class BilevelOracles:
    """Callbacks defining a bilevel problem instance.

    Deterministic oracles take ``(x, y)`` points (plus a tangent vector where
    noted) and return floats or :class:`TangentVector`:

    ``f``, ``g``
        upper and lower objective values.
    ``grad_x_f``, ``grad_y_f``, ``grad_y_g``
        Riemannian partial gradients.
    ``hvp(x, y, v)``
        lower Hessian ``H_y g`` applied to ``v`` in ``T_y``.
    ``cross_apply(x, y, v)``
        ``grad2_yx g[v]`` in ``T_x`` for ``v`` in ``T_y``.
    ``cross_adjoint_apply(x, y, xi)``
        ``grad2_xy g[xi]`` in ``T_y`` for ``xi`` in ``T_x``.

    Optional stochastic samplers take a ``numpy.random.Generator`` as their
    last argument: ``sample_grad_y_G(x, y, rng)``,
    ``sample_grad_F(x, y, rng) -> (grad_x F, grad_y F)`` (one shared sample),
    ``sample_hvp_G(x, y, v, rng)`` and ``sample_cross_G(x, y, v, rng)``.

    ``hessian_operator(x, y)``, when given, returns a callable ``v -> H v``
    that may reuse factorizations across many products at the same point.
    """

    upper: Manifold
    lower: Manifold
    f: Callable
    g: Callable
    grad_x_f: Callable
    grad_y_f: Callable
    grad_y_g: Callable
    hvp: Callable
    cross_apply: Callable
    cross_adjoint_apply: Callable
    meta: Optional[SmoothnessMeta] = None
    hessian_operator: Optional[Callable] = None
    sample_grad_y_G: Optional[Callable] = None
    sample_grad_F: Optional[Callable] = None
    sample_hvp_G: Optional[Callable] = None
    sample_cross_G: Optional[Callable] = None

    def hess_op(self, x, y) -> Callable:
        if self.hessian_operator is not None:
            return self.hessian_operator(x, y)
        return lambda v: self.hvp(x, y, v)

    @property
    def has_samplers(self) -> bool:
        return None not in (
            self.sample_grad_y_G,
            self.sample_grad_F,
            self.sample_hvp_G,
            self.sample_cross_G,
        )


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings shared by the hypergradient estimators.

    ``neumann_scale=None`` means ``1 / meta.l_g1``.
    """

    cg_steps: int = 10
    neumann_terms: int = 50
    neumann_scale: Optional[float] = None
    cg_tol: float = 0.0

    def __post_init__(self):
        if self.cg_steps < 1 or self.neumann_terms < 1:
            raise ValueError("cg_steps and neumann_terms must be >= 1")
        if self.neumann_scale is not None and not self.neumann_scale > 0:
            raise ValueError("neumann_scale must be positive")
        if self.cg_tol < 0:
            raise ValueError("cg_tol must be nonnegative")

    def eta(self, meta: Optional[SmoothnessMeta]) -> float:
        if self.neumann_scale is None:
            if meta is None:
                raise ValueError("neumann_scale is required when no SmoothnessMeta is available")
            return 1.0 / meta.l_g1
        if meta is not None and self.neumann_scale > (1.0 + 1e-12) / meta.l_g1:
            raise ValueError(
                f"neumann_scale {self.neumann_scale} exceeds 1/l_g1 = {1.0 / meta.l_g1}"
            )
        return float(self.neumann_scale)


def _finite(v: TangentVector) -> bool:
    p = v.payload
    if isinstance(p, tuple):
        return all(np.isfinite(a).all() for a in p)
    return bool(np.isfinite(p).all())


def tangent_cg(
    hvp: Callable,
    rhs: TangentVector,
    v0: Optional[TangentVector] = None,
    N: int = 10,
    tol: float = 0.0,
) -> TangentVector:
    """Conjugate gradient for ``hvp(v) = rhs`` on the tangent space at ``rhs.base``.

    All inner products use the Riemannian metric at the base point.  Stops
    after ``N`` iterations or once the residual norm is ``<= tol``.
    """
    y = rhs.base
    M = y.manifold
    v = M.zero(y) if v0 is None else v0
    if not v.base.same_as(y):
        raise BasePointMismatchError("CG initial point is not based at the right-hand side's base")
    r = rhs - hvp(v) if v0 is not None else rhs
    p = r
    rr = M._inner(y, r.payload, r.payload)
    for _ in range(N):
        if math.sqrt(max(rr, 0.0)) <= tol or rr == 0.0:
            break
        Hp = hvp(p)
        pHp = M._inner(y, p.payload, Hp.payload)
        if not (math.isfinite(pHp) and pHp > 0.0):
            raise NonFiniteError(f"CG curvature {pHp!r}: operator is not positive definite")
        a = rr / pHp
        v = v.axpy(a, p)
        r = r.axpy(-a, Hp)
        rr_new = M._inner(y, r.payload, r.payload)
        p = r.axpy(rr_new / rr, p)
        rr = rr_new
        if not _finite(v):
            raise NonFiniteError("CG produced a non-finite iterate")
    return v


def _dense_solve(hvp: Callable, rhs: TangentVector) -> TangentVector:
    y = rhs.base
    M = y.manifold
    basis = M.tangent_basis(y)
    H = np.array([M.to_coords(y, hvp(b)) for b in basis]).T
    H = 0.5 * (H + H.T)
    w = np.linalg.eigvalsh(H)
    if not w[0] > 1e-14 * max(abs(w[-1]), 1.0):
        raise np.linalg.LinAlgError(
            f"lower Hessian is singular or indefinite (min eigenvalue {w[0]:.3e})"
        )
    sol = np.linalg.solve(H, M.to_coords(y, rhs))
    return M.from_coords(y, sol)


def exact_hypergradient(oracles: BilevelOracles, x: ManifoldPoint, y: ManifoldPoint) -> TangentVector:
    """Hypergradient at ``(x, y)`` with a dense direct solve for ``v``.

    Materializes the lower Hessian in an orthonormal tangent basis; meant for
    test-scale problems.
    """
    rhs = oracles.grad_y_f(x, y)
    v = _dense_solve(oracles.hess_op(x, y), rhs)
    return oracles.grad_x_f(x, y) - oracles.cross_apply(x, y, v)


def aid_hypergradient(
    oracles: BilevelOracles,
    x: ManifoldPoint,
    y: ManifoldPoint,
    v0: Optional[TangentVector] = None,
    cfg: EstimatorConfig = EstimatorConfig(),
):
    """AID estimate ``grad_x f - grad2_yx g[v_N]`` with ``v_N`` from ``N``-step CG.

    Returns ``(h, v_N)``; pass ``v_N`` (transported) as the warm start of the
    next call.
    """
    rhs = oracles.grad_y_f(x, y)
    vN = tangent_cg(oracles.hess_op(x, y), rhs, v0, cfg.cg_steps, cfg.cg_tol)
    h = oracles.grad_x_f(x, y) - oracles.cross_apply(x, y, vN)
    return h, vN


def neumann_inverse_apply(
    hvp_sampler: Callable,
    rhs: TangentVector,
    eta: float,
    Q: int,
    rng: np.random.Generator,
) -> TangentVector:
    """Randomized truncated Neumann series for ``H^-1 rhs``.

    Draws ``Q'`` uniformly from ``{0, ..., Q-1}`` and returns
    ``eta Q prod_{q=1}^{Q'} (I - eta H_q) rhs``, applying the sampled factors
    right to left.  ``hvp_sampler(v)`` returns one Hessian sample applied to
    ``v``; a fresh sample is drawn on every call.
    """
    if Q < 1:
        raise ValueError("Q must be >= 1")
    q_prime = int(rng.integers(Q))
    v = rhs
    for _ in range(q_prime):
        v = v.axpy(-eta, hvp_sampler(v))
    return (eta * Q) * v


def neumann_partial_sum(hvp: Callable, rhs: TangentVector, eta: float, Q: int) -> TangentVector:
    """``eta * sum_{q=0}^{Q-1} (I - eta H)^q rhs``."""
    if Q < 1:
        raise ValueError("Q must be >= 1")
    term = rhs
    acc = rhs
    for _ in range(Q - 1):
        term = term.axpy(-eta, hvp(term))
        acc = acc + term
    return eta * acc


def stochastic_hypergradient(
    oracles: BilevelOracles,
    x: ManifoldPoint,
    y: ManifoldPoint,
    cfg: EstimatorConfig,
    rng: np.random.Generator,
) -> TangentVector:
    """Single-sample hypergradient ``grad_x F(xi) - grad2_yx G(zeta_0)[v_Q]``.

    ``rng.spawn(2)`` gives two independent streams: the first draws the
    truncation index ``Q'``, the second feeds every sampler.  With
    zero-variance samplers the result therefore equals the Neumann estimate
    built from the deterministic Hessian and the same index stream.
    """
    if not oracles.has_samplers:
        raise ValueError("stochastic samplers are missing from the oracle bundle")
    index_rng, noise_rng = rng.spawn(2)
    eta = cfg.eta(oracles.meta)
    gx, gy = oracles.sample_grad_F(x, y, noise_rng)
    vQ = neumann_inverse_apply(
        lambda v: oracles.sample_hvp_G(x, y, v, noise_rng), gy, eta, cfg.neumann_terms, index_rng
    )
    return gx - oracles.sample_cross_G(x, y, vQ, noise_rng)


def deterministic_neumann_hypergradient(
    oracles: BilevelOracles,
    x: ManifoldPoint,
    y: ManifoldPoint,
    cfg: EstimatorConfig = EstimatorConfig(),
) -> TangentVector:
    """Hypergradient with ``v`` replaced by the full ``Q``-term Neumann sum."""
    eta = cfg.eta(oracles.meta)
    v = neumann_partial_sum(oracles.hess_op(x, y), oracles.grad_y_f(x, y), eta, cfg.neumann_terms)
    return oracles.grad_x_f(x, y) - oracles.cross_apply(x, y, v)


def neumann_bias_bound(meta: SmoothnessMeta, Q: int) -> float:
    """``l_f0 * kappa * (1 - mu / l_g1)^Q``."""
    return meta.l_f0 * meta.kappa * (1.0 - meta.mu / meta.l_g1) ** Q


def adjointness_check(
    oracles: BilevelOracles,
    x: ManifoldPoint,
    y: ManifoldPoint,
    trials: int = 100,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Largest relative defect between the two cross-derivative oracles.

    Over random ``xi`` in ``T_x`` and ``eta`` in ``T_y`` returns the maximum of
    ``|<eta, grad2_xy g[xi]>_y - <grad2_yx g[eta], xi>_x| / (1 + |xi| |eta|)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    Mx, My = oracles.upper, oracles.lower
    worst = 0.0
    for _ in range(trials):
        xi = Mx.random_tangent(x, rng)
        et = My.random_tangent(y, rng)
        lhs = My.inner(y, et, oracles.cross_adjoint_apply(x, y, xi))
        rhs = Mx.inner(x, oracles.cross_apply(x, y, et), xi)
        scale = 1.0 + Mx.norm(x, xi) * My.norm(y, et)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst

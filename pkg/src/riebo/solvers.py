"""Outer solver loops: deterministic, stochastic and projected robust bilevel."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
import math
import time
from typing import Callable, Optional
import warnings

import numpy as np

from .errors import ManifoldError, NonFiniteError, SolverError
from .hypergrad import (
    BilevelOracles,
    EstimatorConfig,
    aid_hypergradient,
    deterministic_neumann_hypergradient,
    stochastic_hypergradient,
)
from .manifolds import ManifoldPoint, TangentVector, _finite

__all__ = [
    "SolverConfig",
    "TraceRecord",
    "IterateTrace",
    "lower_gd",
    "riebo",
    "riesbo",
    "robust_bilevel",
    "project_simplex",
    "gradient_mapping",
]


@dataclass(frozen=True)
class SolverConfig:
    """Iteration counts, step sizes and estimator settings for one run.

    ``grad_tol`` (off by default) stops the outer loop once the recorded
    gradient norm drops to it.
    """

    K: int = 100
    T: int = 10
    alpha: float = 1e-2
    beta: float = 1e-1
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    seed: int = 0
    record_every: int = 1
    grad_tol: Optional[float] = None

    def __post_init__(self):
        if self.K < 0 or self.T < 0:
            raise ValueError("K and T must be nonnegative")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class TraceRecord:
    k: int
    elapsed_s: float
    objective: float
    grad_norm: float
    inner_residual: float


@dataclass
class IterateTrace:
    records: list = field(default_factory=list)
    final_x: Optional[ManifoldPoint] = None
    final_y: Optional[ManifoldPoint] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def __len__(self):
        return len(self.records)


class _Clock:
    """Monotonic run clock that can exclude bookkeeping intervals."""

    def __init__(self):
        self._start = time.perf_counter()
        self._excluded = 0.0

    def elapsed(self) -> float:
        return time.perf_counter() - self._start - self._excluded

    @contextmanager
    def paused(self):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self._excluded += time.perf_counter() - t0


def _check_beta(oracles: BilevelOracles, beta: float) -> None:
    meta = oracles.meta
    if meta is not None and beta > (1.0 + 1e-12) / meta.l_g1:
        warnings.warn(
            f"beta={beta} exceeds 1/l_g1={1.0 / meta.l_g1:.4g}; the lower loop may diverge",
            RuntimeWarning,
            stacklevel=3,
        )


def lower_gd(
    oracles: BilevelOracles,
    x: ManifoldPoint,
    y0: ManifoldPoint,
    T: int,
    beta: float,
    grad: Optional[Callable] = None,
) -> ManifoldPoint:
    """``T`` Riemannian gradient steps ``y <- Exp_y(-beta grad_y g(x, y))``.

    ``grad(x, y)`` replaces ``oracles.grad_y_g`` when given (sampled gradients).
    """
    grad = oracles.grad_y_g if grad is None else grad
    M = oracles.lower
    y = y0
    for _ in range(T):
        y = M.exp(y, grad(x, y) * (-beta))
        if not _finite(y.payload):
            raise NonFiniteError("lower iterate became non-finite")
    return y


def _record(trace, clock, oracles, k, x, y, grad_norm):
    elapsed = clock.elapsed()
    with clock.paused():
        obj = float(oracles.f(x, y))
        res = oracles.lower.norm(y, oracles.grad_y_g(x, y))
        if not all(math.isfinite(v) for v in (obj, grad_norm, res)):
            raise NonFiniteError(f"non-finite trace values at iteration {k}")
        # SPD iterates: recheck positive definiteness at record steps
        oracles.lower.validate_point(y.payload)
        trace.records.append(TraceRecord(k, elapsed, obj, float(grad_norm), float(res)))


def _should_record(k: int, cfg: SolverConfig) -> bool:
    return k % cfg.record_every == 0 or k == cfg.K - 1


@contextmanager
def _abort_with(trace: IterateTrace, name: str):
    try:
        yield
    except (ManifoldError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise SolverError(f"{name} aborted: {exc}", trace) from exc


def riebo(
    oracles: BilevelOracles,
    x0: ManifoldPoint,
    y0: ManifoldPoint,
    cfg: SolverConfig,
    callback: Optional[Callable] = None,
) -> IterateTrace:
    """Deterministic bilevel descent with CG-based (AID) hypergradients.

    Each outer step warm-starts the lower loop at the previous ``y`` and CG
    at the previous solution transported to the new ``y`` (zero at ``k=0``).
    ``callback(k, x, y, h)`` is called after each hypergradient, outside the
    timed region.
    """
    _check_beta(oracles, cfg.beta)
    U, L = oracles.upper, oracles.lower
    trace = IterateTrace(final_x=x0, final_y=y0)
    clock = _Clock()
    x, y_prev, v_prev = x0, y0, None
    with _abort_with(trace, "riebo"):
        for k in range(cfg.K):
            y = lower_gd(oracles, x, y_prev, cfg.T, cfg.beta)
            v0 = L.zero(y) if v_prev is None else L.transport(y_prev, y, v_prev)
            h, v = aid_hypergradient(oracles, x, y, v0, cfg.estimator)
            hn = U.norm(x, h)
            if _should_record(k, cfg):
                _record(trace, clock, oracles, k, x, y, hn)
            if callback is not None:
                with clock.paused():
                    callback(k, x, y, h)
            x = U.exp(x, h * (-cfg.alpha))
            y_prev, v_prev = y, v
            trace.final_x, trace.final_y = x, y
            if cfg.grad_tol is not None and hn <= cfg.grad_tol:
                break
    return trace


def riesbo(
    oracles: BilevelOracles,
    x0: ManifoldPoint,
    y0: ManifoldPoint,
    cfg: SolverConfig,
    callback: Optional[Callable] = None,
) -> IterateTrace:
    """Stochastic bilevel descent with single-sample Neumann hypergradients.

    All randomness comes from ``numpy.random.default_rng(cfg.seed)``, so a
    run is reproducible bit for bit.
    """
    if not oracles.has_samplers:
        raise ValueError("riesbo needs stochastic samplers in the oracle bundle")
    _check_beta(oracles, cfg.beta)
    U = oracles.upper
    rng = np.random.default_rng(cfg.seed)
    trace = IterateTrace(final_x=x0, final_y=y0)
    clock = _Clock()
    x, y = x0, y0

    def sampled_grad(xx, yy):
        return oracles.sample_grad_y_G(xx, yy, rng)

    with _abort_with(trace, "riesbo"):
        for k in range(cfg.K):
            y = lower_gd(oracles, x, y, cfg.T, cfg.beta, grad=sampled_grad)
            h = stochastic_hypergradient(oracles, x, y, cfg.estimator, rng)
            hn = U.norm(x, h)
            if _should_record(k, cfg):
                _record(trace, clock, oracles, k, x, y, hn)
            if callback is not None:
                with clock.paused():
                    callback(k, x, y, h)
            x = U.exp(x, h * (-cfg.alpha))
            trace.final_x, trace.final_y = x, y
            if cfg.grad_tol is not None and hn <= cfg.grad_tol:
                break
    return trace


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("project_simplex expects a non-empty vector")
    if not np.isfinite(v).all():
        raise NonFiniteError("project_simplex got non-finite entries")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = ks[u - css / ks > 0][-1]
    theta = css[rho - 1] / rho
    p = np.maximum(v - theta, 0.0)
    # fold the rounding residual of the sum into the largest entry (>= 1/n)
    i = int(np.argmax(p))
    p[i] += 1.0 - math.fsum(p)
    return p


def gradient_mapping(y_k, y_next, alpha: float) -> np.ndarray:
    """``(y_k - y_next) / alpha``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return (np.asarray(y_k, dtype=np.float64) - np.asarray(y_next, dtype=np.float64)) / alpha


def robust_bilevel(
    oracles: BilevelOracles,
    weights0: ManifoldPoint,
    lower0: ManifoldPoint,
    cfg: SolverConfig,
    callback: Optional[Callable] = None,
) -> IterateTrace:
    """Projected bilevel loop for simplex weights over a manifold lower level.

    The hypergradient uses the full Neumann sum; the weight update is a
    projected gradient step and ``grad_norm`` records the norm of the
    gradient mapping.
    """
    _check_beta(oracles, cfg.beta)
    U = oracles.upper
    trace = IterateTrace(final_x=weights0, final_y=lower0)
    clock = _Clock()
    w, S = weights0, lower0
    with _abort_with(trace, "robust_bilevel"):
        for k in range(cfg.K):
            S = lower_gd(oracles, w, S, cfg.T, cfg.beta)
            h = deterministic_neumann_hypergradient(oracles, w, S, cfg.estimator)
            w_next = project_simplex(w.payload - cfg.alpha * h.payload)
            G = gradient_mapping(w.payload, w_next, cfg.alpha)
            gn = float(np.linalg.norm(G))
            if _should_record(k, cfg):
                _record(trace, clock, oracles, k, w, S, gn)
            if callback is not None:
                with clock.paused():
                    callback(k, w, S, h)
            w = U.point(w_next)
            trace.final_x, trace.final_y = w, S
            if cfg.grad_tol is not None and gn <= cfg.grad_tol:
                break
    return trace

"""Built-in invariant suite behind ``riebo validate``.

Each check builds its own random cases, compares against an independent
reference and reports the worst error seen.  The suite is a quick health
check of an installation; the test suite covers the same ground in more
depth.
"""

from __future__ import annotations

import itertools
import time
from typing import Callable

import numpy as np

from .hypergrad import (
    EstimatorConfig,
    adjointness_check,
    aid_hypergradient,
    exact_hypergradient,
    neumann_inverse_apply,
    neumann_partial_sum,
    tangent_cg,
)
from .linalg import frechet_log, frechet_log_block, sym
from .manifolds import SPD, Euclidean, fd_directional_derivative, fd_second_derivative
from .problems import make_robust_instance, make_toy_quadratic, robust_oracles
from .solvers import project_simplex
from .spd import karcher_egrad, karcher_loss, karcher_rhess_apply, egrad_to_rgrad


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


def check_geometry(cases: int) -> tuple[bool, str]:
    rng = np.random.default_rng(101)
    worst = 0.0
    for d in (2, 5, 10):
        M = SPD(d)
        for _ in range(cases):
            p, q = M.random_point(rng), M.random_point(rng)
            v = M.random_tangent(p, rng)
            rt = M.log(p, M.exp(p, v))
            worst = max(worst, M.norm(p, rt - v) / max(M.norm(p, v), 1e-300))
            u = M.transport(p, q, v)
            worst = max(worst, _rel(M.norm(q, u), M.norm(p, v)))
            worst = max(worst, _rel(M.dist(p, q), M.norm(p, M.log(p, q))))
    return worst <= 1e-8, f"max rel err {worst:.2e}"


def check_karcher_derivatives(cases: int) -> tuple[bool, str]:
    rng = np.random.default_rng(102)
    worst_g = worst_h = 0.0
    for _ in range(cases):
        M = SPD(4)
        S, A = M.random_point(rng), M.random_point(rng)
        V = M.random_tangent(S, rng, unit=True)

        def h(P):
            return karcher_loss(P, A.payload)

        rg = egrad_to_rgrad(S, karcher_egrad(S, A.payload))
        worst_g = max(worst_g, _rel(fd_directional_derivative(h, S, V), M.inner(S, rg, V)))
        hv = karcher_rhess_apply(S, A.payload, V)
        worst_h = max(worst_h, _rel(fd_second_derivative(h, S, V), M.inner(S, hv, V)))
    ok = worst_g <= 1e-5 and worst_h <= 1e-4
    return ok, f"grad rel err {worst_g:.2e}, hess rel err {worst_h:.2e}"


def check_frechet(cases: int) -> tuple[bool, str]:
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(cases):
        d = int(rng.integers(2, 6))
        Y = SPD(d).random_point(rng).payload
        E = sym(rng.standard_normal((d, d)))
        a, b = frechet_log(Y, E), frechet_log_block(Y, E)
        worst = max(worst, np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))
    return worst <= 1e-8, f"max rel diff {worst:.2e}"


def check_cg() -> tuple[bool, str]:
    E = Euclidean(2)
    y = E.point(np.zeros(2))
    rhs = E.tangent(y, np.array([1.0, 2.0]))
    H = np.diag([1.0, 2.0])
    v = tangent_cg(lambda t: E.tangent(y, H @ t.payload), rhs, None, 2)
    err = float(np.abs(v.payload - 1.0).max())
    return err <= 1e-14, f"two-step error {err:.1e}"


def check_neumann() -> tuple[bool, str]:
    rng = np.random.default_rng(104)
    E = Euclidean(3)
    y = E.point(np.zeros(3))
    X = rng.standard_normal((3, 3))
    H = X @ X.T + np.eye(3)
    eta = 1.0 / np.linalg.eigvalsh(H)[-1]
    rhs = E.tangent(y, rng.standard_normal(3))
    Q = 7
    hv = lambda t: E.tangent(y, H @ t.payload)  # noqa: E731
    # enumerate every truncation index by seeding a generator that returns it
    total = np.zeros(3)
    for q in range(Q):

        class _Fixed:
            def integers(self, high, q=q):
                return q

        total += neumann_inverse_apply(hv, rhs, eta, Q, _Fixed()).payload
    ref = neumann_partial_sum(hv, rhs, eta, Q).payload
    err = float(np.abs(total / Q - ref).max())
    return err <= 1e-12, f"enumeration vs partial sum {err:.1e}"


def check_toy_hypergradient(cases: int) -> tuple[bool, str]:
    toy = make_toy_quadratic(4, 6, 10.0, seed=105)
    o = toy.oracles
    rng = np.random.default_rng(105)
    worst = 0.0
    for _ in range(cases):
        x = o.upper.point(rng.standard_normal(4))
        y = o.lower.point(toy.y_star(x))
        ref = toy.grad_phi(x)
        h1 = exact_hypergradient(o, x, y).payload
        h2, _ = aid_hypergradient(o, x, y, None, EstimatorConfig(cg_steps=6))
        worst = max(worst, np.abs(h1 - ref).max(), np.abs(h2.payload - ref).max())
    return worst <= 1e-8, f"max abs err {worst:.2e}"


def check_robust_adjointness() -> tuple[bool, str]:
    rng = np.random.default_rng(106)
    worst = 0.0
    for kind, n in (("karcher", 4), ("mle", 12)):
        inst = make_robust_instance(kind, 3, n, seed=106)
        o = robust_oracles(inst)
        w = o.upper.random_point(rng)
        S = o.lower.random_point(rng)
        worst = max(worst, adjointness_check(o, w, S, trials=20, rng=rng))
    return worst <= 1e-8, f"max defect {worst:.2e}"


def check_simplex(cases: int) -> tuple[bool, str]:
    rng = np.random.default_rng(107)
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(1, 6))
        v = rng.uniform(-2, 2, n)
        best, best_d = None, np.inf
        for r in range(1, n + 1):
            for supp in itertools.combinations(range(n), r):
                x = np.zeros(n)
                idx = list(supp)
                x[idx] = v[idx] - (v[idx].sum() - 1.0) / r
                if (x >= 0).all() and np.sum((x - v) ** 2) < best_d:
                    best, best_d = x, np.sum((x - v) ** 2)
        worst = max(worst, np.abs(project_simplex(v) - best).max())
    return worst <= 1e-9, f"max abs err {worst:.2e}"


def check_midpoint() -> tuple[bool, str]:
    inst = make_robust_instance("karcher", 4, 2, seed=108)
    A1, A2 = inst.data
    M = SPD(4)
    w = np.array([0.5, 0.5])
    S = inst.lower_solution(w)
    h = M.factors(M.point(A1))
    mid = h[0] @ M.factors(M.point(sym(h[1] @ A2 @ h[1])))[0] @ h[0]
    err = float(np.linalg.norm(S.payload - mid) / np.linalg.norm(mid))
    return err <= 1e-6, f"rel err {err:.2e}"


def checks(fast: bool = False) -> list[tuple[str, Callable[[], tuple[bool, str]]]]:
    c = 5 if fast else 25
    return [
        ("geometry", lambda: check_geometry(c)),
        ("karcher-derivatives", lambda: check_karcher_derivatives(max(2, c // 5))),
        ("frechet-log", lambda: check_frechet(2 * c)),
        ("cg-exactness", check_cg),
        ("neumann-expectation", check_neumann),
        ("toy-hypergradient", lambda: check_toy_hypergradient(c)),
        ("robust-adjointness", check_robust_adjointness),
        ("simplex-projection", lambda: check_simplex(20 * c)),
        ("karcher-midpoint", check_midpoint),
    ]


def run_suite(fast: bool = False, out=print) -> bool:
    """Run every check, print one line each and return ``True`` iff all pass."""
    all_ok = True
    for name, fn in checks(fast):
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # report, keep going
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= ok
        out(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({time.perf_counter() - t0:.2f}s)")
    return all_ok

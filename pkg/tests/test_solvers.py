import dataclasses
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riebo.errors import NonFiniteError, SolverError
from riebo.hypergrad import EstimatorConfig, aid_hypergradient, neumann_inverse_apply
from riebo.problems import RobustInstance, make_robust_instance, make_toy_quadratic, robust_oracles
from riebo.solvers import (
    SolverConfig,
    gradient_mapping,
    lower_gd,
    project_simplex,
    riebo,
    riesbo,
    robust_bilevel,
)


@pytest.fixture
def toy():
    return make_toy_quadratic(4, 6, 5.0, seed=21)


# ----------------------------------------------------------------- lower loop


def test_lower_gd_zero_steps_and_fixed_point(toy):
    x = toy.upper.point(np.ones(4))
    y0 = toy.lower.point(np.zeros(6))
    assert lower_gd(toy.oracles, x, y0, 0, 0.1) is y0
    ys = toy.lower.point(toy.y_star(x))
    np.testing.assert_allclose(lower_gd(toy.oracles, x, ys, 25, 0.1).payload, ys.payload, atol=1e-13)


def test_lower_gd_one_euclidean_step(toy, rng):
    x = toy.upper.point(rng.standard_normal(4))
    y0 = toy.lower.point(rng.standard_normal(6))
    beta = 0.05
    expected = y0.payload - beta * (toy.A @ y0.payload - toy.B @ x.payload - toy.c)
    np.testing.assert_allclose(lower_gd(toy.oracles, x, y0, 1, beta).payload, expected, rtol=1e-14, atol=1e-15)


def test_lower_gd_monotone_and_contracting_on_spd(rng):
    inst = make_robust_instance("karcher", 3, 4, seed=22)
    o = robust_oracles(inst)
    w = o.upper.random_point(rng)
    star = inst.lower_solution(w.payload)
    S = o.lower.random_point(rng, spread=1.5)
    beta = 1.0 / o.meta.l_g1
    vals, dists = [o.g(w, S)], [o.lower.dist(S, star)]
    for _ in range(30):
        S = lower_gd(o, w, S, 1, beta)
        vals.append(o.g(w, S))
        dists.append(o.lower.dist(S, star))
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    assert dists[-1] < 0.5 * dists[0]


def test_lower_gd_reports_divergence():
    toy = make_toy_quadratic(2, 3, 10.0, seed=23)
    x = toy.upper.point(np.ones(2))
    y = toy.lower.point(np.ones(3))
    with warnings.catch_warnings(), pytest.raises(NonFiniteError):
        warnings.simplefilter("ignore", RuntimeWarning)
        lower_gd(toy.oracles, x, y, 2000, 10.0)


# ----------------------------------------------------------------- deterministic outer loop


def test_riebo_zero_iterations(toy):
    x0, y0 = toy.upper.point(np.ones(4)), toy.lower.point(np.zeros(6))
    tr = riebo(toy.oracles, x0, y0, SolverConfig(K=0))
    assert len(tr) == 0 and tr.final_x is x0 and tr.final_y is y0


def test_riebo_one_step_is_the_composition(toy, rng):
    o = toy.oracles
    x0, y0 = toy.upper.point(rng.standard_normal(4)), toy.lower.point(rng.standard_normal(6))
    cfg = SolverConfig(K=1, T=5, alpha=0.1, beta=0.1, estimator=EstimatorConfig(cg_steps=3))
    tr = riebo(o, x0, y0, cfg)
    y = lower_gd(o, x0, y0, 5, 0.1)
    h, _ = aid_hypergradient(o, x0, y, o.lower.zero(y), cfg.estimator)
    np.testing.assert_array_equal(tr.final_x.payload, x0.payload - 0.1 * h.payload)
    np.testing.assert_array_equal(tr.final_y.payload, y.payload)
    rec = tr.records[0]
    assert rec.k == 0 and rec.grad_norm == pytest.approx(np.linalg.norm(h.payload), rel=1e-15)
    assert rec.objective == o.f(x0, y)


def test_riebo_converges_on_toy(toy):
    cfg = SolverConfig(K=150, T=20, alpha=1.0 / toy.phi_lipschitz(), beta=1.0 / toy.meta.l_g1,
                       estimator=EstimatorConfig(cg_steps=6))
    tr = riebo(toy.oracles, toy.upper.point(np.ones(4)), toy.lower.point(np.zeros(6)), cfg)
    g = tr.column("grad_norm")
    assert g[-1] <= 1e-8 * g[0]
    np.testing.assert_allclose(toy.grad_phi(tr.final_x), 0.0, atol=1e-7)
    t = tr.column("elapsed_s")
    assert (np.diff(t) >= 0).all()


def test_riebo_recording_callback_and_tolerance(toy):
    seen = []
    cfg = SolverConfig(K=10, T=3, alpha=0.1, beta=0.1, record_every=4)
    tr = riebo(toy.oracles, toy.upper.point(np.ones(4)), toy.lower.point(np.zeros(6)), cfg,
               callback=lambda k, x, y, h: seen.append(k))
    assert [r.k for r in tr.records] == [0, 4, 8, 9]
    assert seen == list(range(10))
    stop = SolverConfig(K=100, T=3, alpha=0.1, beta=0.1, grad_tol=1e30)
    assert len(riebo(toy.oracles, toy.upper.point(np.ones(4)), toy.lower.point(np.zeros(6)), stop)) == 1


def test_large_beta_warns(toy):
    cfg = SolverConfig(K=1, T=1, beta=2.0 / toy.meta.l_g1)
    with pytest.warns(RuntimeWarning, match="beta"):
        riebo(toy.oracles, toy.upper.point(np.ones(4)), toy.lower.point(np.zeros(6)), cfg)


def test_solver_config_validation():
    for bad in ({"K": -1}, {"T": -1}, {"alpha": 0.0}, {"beta": -1.0}, {"record_every": 0}, {"seed": -1}):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


# ----------------------------------------------------------------- stochastic outer loop


def test_riesbo_same_seed_same_trace():
    toy = make_toy_quadratic(3, 4, 5.0, seed=24, sigma=0.1)
    cfg = SolverConfig(K=20, T=3, alpha=0.05, beta=0.1, seed=7)
    x0, y0 = toy.upper.point(np.ones(3)), toy.lower.point(np.zeros(4))
    a = riesbo(toy.oracles, x0, y0, cfg)
    b = riesbo(toy.oracles, x0, y0, cfg)
    np.testing.assert_array_equal(a.column("objective"), b.column("objective"))
    np.testing.assert_array_equal(a.final_x.payload, b.final_x.payload)
    c = riesbo(toy.oracles, x0, y0, SolverConfig(K=20, T=3, alpha=0.05, beta=0.1, seed=8))
    assert not np.array_equal(a.final_x.payload, c.final_x.payload)


def test_riesbo_zero_variance_matches_reference():
    toy = make_toy_quadratic(3, 4, 5.0, seed=25, sigma=0.0)
    o = toy.oracles
    est = EstimatorConfig(neumann_terms=15)
    cfg = SolverConfig(K=8, T=4, alpha=0.1, beta=0.15, seed=3, estimator=est)
    x0, y0 = toy.upper.point(np.ones(3)), toy.lower.point(np.zeros(4))
    tr = riesbo(o, x0, y0, cfg)
    # the index streams depend only on the spawn count, not on draws from the parent
    parent = np.random.default_rng(3)
    x, y = x0, y0
    for _ in range(cfg.K):
        y = lower_gd(o, x, y, cfg.T, cfg.beta)
        idx, _ = parent.spawn(2)
        v = neumann_inverse_apply(o.hess_op(x, y), o.grad_y_f(x, y), est.eta(o.meta), 15, idx)
        h = o.grad_x_f(x, y) - o.cross_apply(x, y, v)
        x = o.upper.exp(x, h * (-cfg.alpha))
    np.testing.assert_array_equal(tr.final_x.payload, x.payload)


def test_riesbo_requires_samplers(toy):
    bare = dataclasses.replace(toy.oracles, sample_grad_F=None)
    with pytest.raises(ValueError):
        riesbo(bare, toy.upper.point(np.ones(4)), toy.lower.point(np.zeros(6)), SolverConfig(K=1))


# ----------------------------------------------------------------- simplex tools


@pytest.mark.parametrize(
    "v,expected",
    [
        ([0.5, 0.5], [0.5, 0.5]),
        ([1.0, 1.0], [0.5, 0.5]),
        ([2.0, 0.0], [1.0, 0.0]),
        ([-1.0, -1.0, -1.0], [1 / 3, 1 / 3, 1 / 3]),
        ([0.3, 0.9, -0.5], [0.2, 0.8, 0.0]),
        ([7.0], [1.0]),
    ],
)
def test_project_simplex_examples(v, expected):
    np.testing.assert_allclose(project_simplex(v), expected, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=12))
def test_project_simplex_is_the_projection(v):
    v = np.array(v)
    p = project_simplex(v)
    assert (p >= 0).all()
    assert abs(math.fsum(p) - 1.0) <= np.finfo(float).eps
    np.testing.assert_allclose(project_simplex(p), p, atol=1e-12)
    # variational inequality against the vertices certifies optimality
    for i in range(v.size):
        e = np.zeros(v.size)
        e[i] = 1.0
        assert (v - p) @ (e - p) <= 1e-8 * (1 + np.abs(v).max())


def test_project_simplex_rejects_bad_input():
    with pytest.raises(ValueError):
        project_simplex([])
    with pytest.raises(NonFiniteError):
        project_simplex([1.0, np.nan])


def test_gradient_mapping_examples():
    np.testing.assert_array_equal(gradient_mapping([1.0, 0.0], [0.5, 0.5], 0.5), [1.0, -1.0])
    assert not gradient_mapping([0.2, 0.8], [0.2, 0.8], 3.0).any()
    with pytest.raises(ValueError):
        gradient_mapping([1.0], [1.0], 0.0)


# ----------------------------------------------------------------- robust loop


def test_robust_single_datum_stays_put():
    inst = make_robust_instance("karcher", 3, 1, seed=26)
    o = robust_oracles(inst)
    tr = robust_bilevel(o, o.upper.uniform(), o.lower.point(np.eye(3)), SolverConfig(K=5, T=20, beta=0.1))
    np.testing.assert_array_equal(tr.final_x.payload, [1.0])
    assert not tr.column("grad_norm").any()


def test_robust_identical_data_is_a_fixed_point():
    inst = make_robust_instance("karcher", 3, 1, seed=27)
    same = RobustInstance("karcher", np.repeat(inst.data, 4, axis=0))
    o = robust_oracles(same)
    tr = robust_bilevel(o, o.upper.uniform(), o.lower.point(np.eye(3)), SolverConfig(K=5, T=20, beta=0.1))
    np.testing.assert_allclose(tr.final_x.payload, 0.25, atol=1e-14)
    assert tr.column("grad_norm").max() <= 1e-12


@pytest.mark.parametrize("kind,n", [("karcher", 4), ("mle", 40)])
def test_robust_iterates_stay_feasible(kind, n):
    inst = make_robust_instance(kind, 3, n, seed=28)
    o = robust_oracles(inst)
    seen = []

    def check(k, w, S, h):
        assert np.linalg.eigvalsh(S.payload).min() > 0
        assert (w.payload >= 0).all() and abs(w.payload.sum() - 1) <= 1e-12
        seen.append(k)

    tr = robust_bilevel(o, o.upper.uniform(), o.lower.point(np.eye(3)),
                        SolverConfig(K=15, T=30, alpha=1e-2, beta=0.1), callback=check)
    assert seen == list(range(15)) and len(tr) == 15
    assert tr.column("grad_norm")[-1] < tr.column("grad_norm")[0]


def test_robust_mle_large_step_fails_with_partial_trace():
    # at d=30 a step of 1e-2 concentrates the weights on a few samples, the
    # weighted second moment loses rank and the lower loop overflows
    inst = make_robust_instance("mle", 30, 100, seed=0)
    o = robust_oracles(inst)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(SolverError) as info:
            robust_bilevel(o, o.upper.uniform(), o.lower.point(np.eye(30)),
                           SolverConfig(K=50, T=200, alpha=1e-2, beta=1e-1))
    trace = info.value.trace
    assert 0 < len(trace) < 50
    assert np.isfinite(trace.column("objective")).all()

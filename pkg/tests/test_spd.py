import math

import numpy as np
import pytest

from riebo.errors import ManifoldError, NotPositiveDefiniteError
from riebo.linalg import sym
from riebo.manifolds import SPD, fd_directional_derivative, fd_second_derivative
from riebo.spd import (
    KarcherHessian,
    KarcherTerm,
    egrad_to_rgrad,
    ehess_to_rhess,
    karcher_egrad,
    karcher_ehess_apply,
    karcher_ehess_entrywise,
    karcher_loss,
    karcher_rhess_apply,
    mle_egrad,
    mle_ehess_apply,
    mle_loss,
    mle_rhess_apply,
)

from conftest import rel_err


def rand_pair(rng, d):
    M = SPD(d)
    return M, M.random_point(rng, spread=1.2), M.random_point(rng, spread=1.2)


# ----------------------------------------------------------------- conversions


def test_egrad_to_rgrad_trivial_cases():
    I = SPD(2).point(np.eye(2))
    G = np.array([[1.0, 2.0], [2.0, 3.0]])
    np.testing.assert_array_equal(egrad_to_rgrad(I, G).payload, G)
    np.testing.assert_array_equal(egrad_to_rgrad(I, np.zeros((2, 2))).payload, np.zeros((2, 2)))
    with pytest.raises(ManifoldError):
        egrad_to_rgrad(I, np.zeros((3, 3)))


def test_ehess_to_rhess_trivial_cases():
    I = SPD(2).point(np.eye(2))
    H = np.array([[1.0, -1.0], [-1.0, 4.0]])
    V = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(ehess_to_rhess(I, np.zeros((2, 2)), H, V).payload, H)
    Z = np.zeros((2, 2))
    np.testing.assert_array_equal(ehess_to_rhess(I, Z, Z, Z).payload, Z)


# ----------------------------------------------------------------- Karcher loss


def test_karcher_at_data_point():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert karcher_loss(A, A) == pytest.approx(0.0, abs=1e-28)
    np.testing.assert_allclose(karcher_egrad(A, A), np.zeros((2, 2)), atol=1e-14)


def test_karcher_scalar_gradient_value():
    # h(s) = log(s/a)^2, h'(s) = 2 log(s/a) / s; at s = e, a = 1 this is 2/e
    g = karcher_egrad(np.array([[math.e]]), np.array([[1.0]]))
    assert g[0, 0] == pytest.approx(2.0 / math.e, rel=1e-15)


@pytest.mark.parametrize("s,a,v", [(0.3, 2.0, 1.5), (4.0, 0.5, -0.7), (1.0, 1.0, 2.0)])
def test_karcher_scalar_hessian_is_twice_identity(s, a, v):
    hv = karcher_rhess_apply(np.array([[s]]), np.array([[a]]), np.array([[v]]))
    assert hv.payload[0, 0] == pytest.approx(2.0 * v, rel=1e-13)


def test_karcher_hessian_at_identity_is_twice_identity(rng):
    I = np.eye(3)
    V = sym(rng.standard_normal((3, 3)))
    np.testing.assert_allclose(karcher_rhess_apply(I, I, V).payload, 2.0 * V, atol=1e-13)


def test_karcher_loss_is_squared_distance(rng):
    M, S, A = rand_pair(rng, 4)
    assert karcher_loss(S, A.payload) == pytest.approx(M.dist(S, A) ** 2, rel=1e-12)


def test_karcher_gradient_matches_geodesic_fd(rng):
    for d in (2, 3, 5):
        for _ in range(10):
            M, S, A = rand_pair(rng, d)
            V = M.random_tangent(S, rng, unit=True)
            fd = fd_directional_derivative(lambda P: karcher_loss(P, A.payload), S, V)
            an = M.inner(S, egrad_to_rgrad(S, karcher_egrad(S, A.payload)), V)
            assert abs(fd - an) <= 1e-5 * max(abs(an), 1e-3)


def test_karcher_egrad_matches_euclidean_fd(rng):
    M, S, A = rand_pair(rng, 3)
    G = karcher_egrad(S, A.payload)
    h = 1e-6
    E = sym(rng.standard_normal((3, 3)))
    fd = (karcher_loss(S.payload + h * E, A.payload) - karcher_loss(S.payload - h * E, A.payload)) / (2 * h)
    assert fd == pytest.approx(float(np.sum(G * E)), rel=1e-5)


def test_karcher_hessian_matches_second_difference(rng):
    for d in (2, 3, 5):
        for _ in range(8):
            M, S, A = rand_pair(rng, d)
            V = M.random_tangent(S, rng, unit=True)
            sd = fd_second_derivative(lambda P: karcher_loss(P, A.payload), S, V)
            an = M.inner(S, karcher_rhess_apply(S, A.payload, V), V)
            assert abs(sd - an) <= 1e-4 * abs(an)
            assert an > 0


def test_karcher_hessian_self_adjoint(rng):
    for _ in range(20):
        M, S, A = rand_pair(rng, 4)
        U, V = M.random_tangent(S, rng), M.random_tangent(S, rng)
        lhs = M.inner(S, karcher_rhess_apply(S, A.payload, U), V)
        rhs = M.inner(S, U, karcher_rhess_apply(S, A.payload, V))
        assert abs(lhs - rhs) <= 1e-9 * (1 + M.norm(S, U) * M.norm(S, V))


def test_karcher_entrywise_agrees_with_daleckii_krein(rng):
    for d in (1, 2, 3, 4, 5):
        for _ in range(3):
            M, S, A = rand_pair(rng, d)
            V = M.random_tangent(S, rng).payload
            a = karcher_ehess_apply(S, A.payload, V)
            b = karcher_ehess_entrywise(S, A.payload, V)
            assert np.abs(a - b).max() <= 1e-8 * max(1.0, np.abs(a).max())


def test_karcher_ehess_matches_derivative_of_egrad(rng):
    M, S, A = rand_pair(rng, 3)
    V = sym(rng.standard_normal((3, 3)))
    h = 1e-6
    fd = (karcher_egrad(S.payload + h * V, A.payload) - karcher_egrad(S.payload - h * V, A.payload)) / (2 * h)
    assert rel_err(karcher_ehess_apply(S, A.payload, V), fd) <= 1e-6


def test_karcher_hessian_object_reuse(rng):
    M, S, A = rand_pair(rng, 3)
    kh = KarcherHessian(S, KarcherTerm(A.payload))
    V = M.random_tangent(S, rng)
    np.testing.assert_allclose(kh.rhess(V), karcher_rhess_apply(S, A.payload, V).payload, atol=1e-13)
    assert kh.loss() == pytest.approx(karcher_loss(S, A.payload), rel=1e-14)


def test_karcher_term_rejects_bad_data():
    with pytest.raises(NotPositiveDefiniteError):
        KarcherTerm(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        KarcherTerm(np.eye(2), weight=-1.0)


# ----------------------------------------------------------------- Gaussian likelihood


def test_mle_trivial_values():
    I = np.eye(3)
    assert mle_loss(I, np.zeros(3)) == 0.0
    np.testing.assert_array_equal(mle_egrad(I, np.zeros(3)), 0.5 * I)


def test_mle_scalar_stationary_point():
    x = 1.7
    s = x * x
    assert mle_loss(np.array([[s]]), np.array([x])) == pytest.approx(0.5 * (math.log(s) + 1.0), rel=1e-15)
    assert abs(mle_egrad(np.array([[s]]), np.array([x]))[0, 0]) <= 1e-15


def test_mle_gradient_and_hessian_fd(rng):
    for d in (2, 4, 6):
        for _ in range(8):
            M = SPD(d)
            S = M.random_point(rng)
            x = rng.standard_normal(d)
            V = M.random_tangent(S, rng, unit=True)
            loss = lambda P: mle_loss(P, x)  # noqa: E731
            g = M.inner(S, egrad_to_rgrad(S, mle_egrad(S, x)), V)
            assert abs(fd_directional_derivative(loss, S, V) - g) <= 1e-5 * max(abs(g), 1e-3)
            h = M.inner(S, mle_rhess_apply(S, x, V), V)
            assert abs(fd_second_derivative(loss, S, V) - h) <= 1e-4 * max(abs(h), 1e-2)


def test_mle_ehess_matches_derivative_of_egrad(rng):
    S = SPD(3).random_point(rng).payload
    x = rng.standard_normal(3)
    V = sym(rng.standard_normal((3, 3)))
    h = 1e-6
    fd = (mle_egrad(S + h * V, x) - mle_egrad(S - h * V, x)) / (2 * h)
    assert rel_err(mle_ehess_apply(S, x, V), fd) <= 1e-6


def test_mle_hessian_self_adjoint(rng):
    M = SPD(4)
    for _ in range(20):
        S = M.random_point(rng)
        x = rng.standard_normal(4)
        U, V = M.random_tangent(S, rng), M.random_tangent(S, rng)
        lhs = M.inner(S, mle_rhess_apply(S, x, U), V)
        rhs = M.inner(S, U, mle_rhess_apply(S, x, V))
        assert abs(lhs - rhs) <= 1e-9 * (1 + M.norm(S, U) * M.norm(S, V))


def test_mle_shape_mismatch():
    with pytest.raises(ManifoldError):
        mle_loss(np.eye(2), np.ones(3))

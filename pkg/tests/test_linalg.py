import numpy as np
import pytest
import scipy.linalg

from riebo.errors import NonFiniteError, NotPositiveDefiniteError
from riebo.linalg import (
    frechet_log,
    frechet_log_block,
    loewner_log,
    spd_invsqrt,
    spd_log,
    spd_sqrt,
    sym,
    sym_eigen,
    sym_exp,
)


def random_spd(rng, d, spread=1.0):
    X = sym(rng.standard_normal((d, d))) * spread / np.sqrt(d)
    return sym_exp(X)


def test_sym_eigen_diag_descending():
    eig = sym_eigen(np.diag([1.0, 3.0]))
    np.testing.assert_array_equal(eig.values, [3.0, 1.0])
    np.testing.assert_allclose(np.abs(eig.vectors), [[0.0, 1.0], [1.0, 0.0]])


def test_sym_eigen_identity():
    np.testing.assert_array_equal(sym_eigen(np.eye(4)).values, np.ones(4))


def test_sym_eigen_reconstruction(rng):
    for _ in range(20):
        S = sym(rng.standard_normal((6, 6)))
        assert np.linalg.norm(sym_eigen(S).reconstruct() - S) <= 1e-10 * np.linalg.norm(S)


def test_sym_eigen_rejects_nonsymmetric_and_nonfinite():
    with pytest.raises(ValueError):
        sym_eigen(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NonFiniteError):
        sym_eigen(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_matrix_functions_closed_forms():
    np.testing.assert_allclose(spd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)
    np.testing.assert_allclose(spd_invsqrt(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]), atol=1e-15)
    np.testing.assert_array_equal(spd_log(np.eye(3)), np.zeros((3, 3)))
    np.testing.assert_allclose(sym_exp(np.diag([np.log(2.0), np.log(3.0)])), np.diag([2.0, 3.0]), rtol=1e-15)


def test_exp_log_round_trip(rng):
    for _ in range(20):
        S = random_spd(rng, 5, spread=2.0)
        assert np.linalg.norm(sym_exp(spd_log(S)) - S) <= 1e-10 * np.linalg.norm(S)


def test_spd_functions_reject_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        spd_log(np.diag([1.0, -1.0]))
    with pytest.raises(NotPositiveDefiniteError):
        frechet_log(np.diag([1.0, 0.0]), np.eye(2))


def test_loewner_log_values():
    K = loewner_log(np.array([np.e, 1.0]))
    np.testing.assert_allclose(K, [[1 / np.e, 1 / (np.e - 1)], [1 / (np.e - 1), 1.0]], rtol=1e-14)


def test_loewner_log_degenerate_pair_uses_limit():
    lam = np.array([2.0, 2.0 * (1 + 1e-12)])
    K = loewner_log(lam)
    assert K[0, 1] == 2.0 / (lam[0] + lam[1])
    assert abs(K[0, 1] - 0.5) < 1e-11


def test_frechet_log_identity_and_scalar():
    E = np.array([[1.0, 2.0], [2.0, -3.0]])
    np.testing.assert_allclose(frechet_log(np.eye(2), E), E, atol=1e-15)
    np.testing.assert_allclose(frechet_log(4.0 * np.eye(2), E), E / 4.0, atol=1e-15)


def test_frechet_log_matches_finite_difference_and_block(rng):
    h = 1e-5
    for _ in range(30):
        d = int(rng.integers(2, 6))
        Y = random_spd(rng, d)
        E = sym(rng.standard_normal((d, d)))
        dk = frechet_log(Y, E)
        fd = (spd_log(Y + h * E) - spd_log(Y - h * E)) / (2 * h)
        assert np.linalg.norm(dk - fd) <= 1e-6 * np.linalg.norm(dk)
        assert np.abs(dk - frechet_log_block(Y, E)).max() <= 1e-8 * max(1.0, np.abs(dk).max())


def test_frechet_log_nonsymmetric_direction_matches_scipy(rng):
    Y = random_spd(rng, 4)
    E = rng.standard_normal((4, 4))
    # D log(Y)[E] inverts D exp(log Y)[.]
    L = frechet_log(Y, E)
    back = scipy.linalg.expm_frechet(spd_log(Y), L, compute_expm=False)
    np.testing.assert_allclose(back, E, atol=1e-10)


def test_frechet_log_linearity(rng):
    Y = random_spd(rng, 4)
    E1, E2 = sym(rng.standard_normal((4, 4))), sym(rng.standard_normal((4, 4)))
    lhs = frechet_log(Y, 2.0 * E1 - 3.0 * E2)
    rhs = 2.0 * frechet_log(Y, E1) - 3.0 * frechet_log(Y, E2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_frechet_log_near_degenerate_spectrum_is_accurate():
    Y = np.diag([1.0, 1.0 + 1e-10, 3.0])
    E = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 2.0], [0.0, 2.0, 0.0]])
    L = frechet_log(Y, E)
    assert abs(L[0, 1] - 1.0) < 1e-9
    assert abs(L[1, 2] - 2.0 * np.log(3.0) / 2.0) < 1e-9

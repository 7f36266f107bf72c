import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import legendre as npleg
from scipy.special import sph_harm_y

from hegnn.geomgraph import random_rotation
from hegnn.groups import INVERSION, O3Element
from hegnn.specfun import (
    MAX_DEGREE,
    addition_constant,
    check_rotation,
    legendre_all,
    legendre_eval,
    o3_rep,
    rotation_character,
    sph_harm,
    sph_harm_all,
    wigner_d,
    wigner_d_all,
)

unit_vectors = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1).map(
    lambda v: np.array(v) / np.linalg.norm(v))


def scipy_real_sh(l, u):
    """Real harmonics from scipy's complex ones, without the Condon-Shortley phase."""
    theta = np.arccos(np.clip(u[..., 2], -1, 1))
    phi = np.arctan2(u[..., 1], u[..., 0])
    out = np.empty(u.shape[:-1] + (2 * l + 1,))
    s = np.sqrt(4 * np.pi)
    for m in range(-l, l + 1):
        Y = sph_harm_y(l, abs(m), theta, phi)
        if m == 0:
            out[..., l] = s * Y.real
        elif m > 0:
            out[..., l + m] = s * np.sqrt(2) * (-1) ** m * Y.real
        else:
            out[..., l + m] = s * np.sqrt(2) * (-1) ** m * Y.imag
    return out


def test_legendre_matches_numpy(rng):
    t = rng.uniform(-1, 1, 50)
    for l in range(MAX_DEGREE + 1):
        coef = np.zeros(l + 1)
        coef[l] = 1
        assert np.allclose(legendre_eval(l, t), npleg.legval(t, coef), atol=1e-12)


def test_legendre_small_values():
    assert legendre_eval(0, 0.3) == 1.0
    assert legendre_eval(1, 0.3) == pytest.approx(0.3)
    assert legendre_eval(2, 0.5) == pytest.approx(-0.125)
    assert legendre_eval(5, 1.0) == pytest.approx(1.0)
    assert legendre_eval(5, -1.0) == pytest.approx(-1.0)


def test_legendre_clamps_rounding_but_rejects_out_of_range():
    assert legendre_eval(3, 1.0 + 1e-13) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        legendre_eval(3, 1.01)
    with pytest.raises(ValueError):
        legendre_eval(-1, 0.0)


def test_legendre_all_stacks_degrees(rng):
    t = rng.uniform(-1, 1, 7)
    allp = legendre_all(6, t)
    for l in range(7):
        assert np.allclose(allp[l], legendre_eval(l, t))


@given(st.integers(0, MAX_DEGREE), st.floats(-1, 1))
def test_legendre_bounded(l, t):
    assert abs(legendre_eval(l, t)) <= 1 + 1e-12


def test_sph_harm_matches_scipy(rng):
    u = rng.standard_normal((30, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    for l in range(0, MAX_DEGREE + 1):
        assert np.allclose(sph_harm(l, u), scipy_real_sh(l, u), atol=1e-9 * (2 * l + 1))


def test_degree_one_is_permuted_coordinates():
    u = np.array([0.36, 0.48, 0.8])
    assert np.allclose(sph_harm(1, u), np.sqrt(3) * u[[1, 2, 0]])


@given(unit_vectors, st.integers(0, MAX_DEGREE))
def test_component_normalization(u, l):
    assert np.linalg.norm(sph_harm(l, u)) ** 2 == pytest.approx(2 * l + 1, rel=1e-10)


def test_sph_harm_rejects_non_unit():
    with pytest.raises(ValueError):
        sph_harm(2, np.array([1.0, 1.0, 0.0]))


def test_sph_harm_all_consistent(rng):
    u = rng.standard_normal((5, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    blocks = sph_harm_all(8, u)
    for l in range(9):
        assert np.allclose(blocks[l], sph_harm(l, u))


@given(unit_vectors, unit_vectors, st.integers(0, MAX_DEGREE))
def test_addition_theorem(u, v, l):
    lhs = sph_harm(l, u) @ sph_harm(l, v)
    rhs = addition_constant(l) * legendre_eval(l, np.clip(u @ v, -1, 1))
    assert lhs == pytest.approx(rhs, abs=1e-9 * (2 * l + 1))


def test_wigner_equivariance_high_degree(rng):
    R = random_rotation(rng)
    u = rng.standard_normal((10, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    D = wigner_d_all(MAX_DEGREE, R)
    for l in (0, 1, 7, 19, 30):
        assert np.allclose(sph_harm(l, u @ R.T), sph_harm(l, u) @ D[l].T, atol=1e-9)


@given(st.integers(0, 2**32 - 1), st.integers(0, 12))
def test_wigner_orthogonal_and_homomorphic(seed, l):
    rng = np.random.default_rng(seed)
    R1, R2 = random_rotation(rng), random_rotation(rng)
    D1, D2 = wigner_d(l, R1), wigner_d(l, R2)
    assert np.allclose(D1 @ D1.T, np.eye(2 * l + 1), atol=1e-10)
    assert np.allclose(wigner_d(l, R1 @ R2), D1 @ D2, atol=1e-10)


def test_wigner_degree_one_is_rotation_in_permuted_basis(rng):
    R = random_rotation(rng)
    P = np.eye(3)[[1, 2, 0]]
    assert np.allclose(wigner_d(1, R), P @ R @ P.T, atol=1e-12)


def test_check_rotation_rejects_reflections():
    with pytest.raises(ValueError):
        check_rotation(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        check_rotation(np.ones((3, 3)))


def test_o3_rep_parity_sign(rng):
    R = random_rotation(rng)
    for l in range(6):
        D = wigner_d(l, R)
        assert np.allclose(o3_rep(l, O3Element(R, 1)), (-1) ** l * D)
    assert np.allclose(o3_rep(3, INVERSION), -np.eye(7))


def test_rotation_character_is_trace(rng):
    for angle in (0.0, 0.4, np.pi / 3, np.pi, 2 * np.pi):
        c, s = np.cos(angle), np.sin(angle)
        R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
        for l in range(8):
            assert rotation_character(l, angle) == pytest.approx(np.trace(wigner_d(l, R)), abs=1e-10)

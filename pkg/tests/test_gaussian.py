import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gamma

from polykin.errors import ParameterError, TensorNotPositiveDefinite
from polykin.gaussian import (
    build_gaussian,
    corrected_tensor,
    gaussian_factors,
    lambda_delta,
    lambda_delta_quadrature,
    maxwellian,
    relaxation_temperature,
)
from polykin.moments import MacroState, compute_macro, conserved_moments
from polykin.params import Params
from polykin.sampling import make_rng, random_distribution, random_rotations

WORKED = MacroState.from_fields(1.0, [0, 0, 0], np.diag([1.0, 2.0, 3.0]), 1.0, 2.0)


@pytest.mark.parametrize("delta,expected", [(2.0, 1.0), (4.0, 0.5), (3.0, 4 / (3 * math.sqrt(math.pi)))])
def test_lambda_delta_values(delta, expected):
    assert lambda_delta(delta) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("delta", [0.5, 1.0, 3.0, 7.5])
def test_lambda_delta_quadrature(delta):
    assert lambda_delta_quadrature(delta) * lambda_delta(delta) == pytest.approx(1.0, rel=1e-9)


def test_lambda_delta_rejects():
    with pytest.raises(ParameterError):
        lambda_delta(0.0)


def test_tensor_theta_one_is_isotropic():
    t = corrected_tensor(WORKED, Params(0.3, 1.0, 2.0))
    np.testing.assert_allclose(t.matrix, 1.6 * np.eye(3), rtol=1e-15)


def test_tensor_nu_zero_theta_zero():
    t = corrected_tensor(WORKED, Params(0.0, 0.0, 2.0))
    np.testing.assert_allclose(t.matrix, 2.0 * np.eye(3), rtol=1e-15)


def test_tensor_worked_example():
    t = corrected_tensor(WORKED, Params(0.5, 0.0, 2.0))
    np.testing.assert_allclose(t.matrix, np.diag([1.5, 2.0, 2.5]), rtol=1e-15)
    np.testing.assert_allclose(t.eigvals, [1.5, 2.0, 2.5], rtol=1e-14)
    np.testing.assert_allclose(t.inverse @ t.matrix, np.eye(3), atol=1e-14)
    assert t.det == pytest.approx(7.5, rel=1e-14)


@given(st.floats(0.0, 10), st.floats(0.0, 10), st.floats(0.01, 10), st.floats(-0.4999, 0.0),
       st.floats(0, 1))
def test_tensor_stays_spd_for_negative_nu(l1, l2, l3, nu, theta):
    # Theta_i <= 3 T_tr gives A_i >= (1-theta)(1+2 nu) T_tr + theta T_delta > 0
    mac = MacroState.from_fields(1.0, [0, 0, 0], np.diag([l1, l2, l3]), 1.0, 2.0)
    t = corrected_tensor(mac, Params(nu, theta, 2.0))
    floor = (1 - theta) * (1 + 2 * nu) * mac.T_tr + theta * mac.T_delta
    assert t.eigvals[0] >= floor * (1 - 1e-12)


def test_tensor_rejects_non_psd_theta():
    # only reachable with a non-physical (indefinite) Theta
    mac = MacroState.from_fields(1.0, [0, 0, 0], np.diag([-5.0, 1.0, 1.0]), 1.0, 2.0)
    with pytest.raises(TensorNotPositiveDefinite):
        corrected_tensor(mac, Params(0.9, 0.0, 2.0))


def test_simultaneous_diagonalization():
    Q = random_rotations(make_rng(3), 1)[0]
    Theta = Q.T @ np.diag([0.5, 1.0, 2.0]) @ Q
    mac = MacroState.from_fields(1.0, [0, 0, 0], Theta, 0.8, 3.0)
    p = Params(0.4, 0.3, 3.0)
    t = corrected_tensor(mac, p)
    d = t.frame.T @ mac.Theta @ t.frame
    np.testing.assert_allclose(d - np.diag(np.diag(d)), 0.0, atol=1e-13)
    A = (1 - p.theta) * ((1 - p.nu) * mac.T_tr + p.nu * np.diag(d)) + p.theta * mac.T_delta
    np.testing.assert_allclose(t.eigvals, A, rtol=1e-13)


@pytest.mark.parametrize("theta,expected", [(0.0, 1.0), (1.0, 1.6), (0.5, 1.3)])
def test_relaxation_temperature(theta, expected):
    assert relaxation_temperature(WORKED, Params(0.2, theta, 2.0)) == pytest.approx(expected)


@given(st.floats(0.1, 5), st.floats(-0.49, 0.99), st.floats(0, 1))
def test_relaxation_temperature_fixed_point(T, nu, theta):
    mac = MacroState.from_fields(1.0, [0, 0, 0], T * np.eye(3), T, 2.0)
    assert relaxation_temperature(mac, Params(nu, theta, 2.0)) == pytest.approx(T, rel=1e-14)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10),
       st.floats(0, 0.99), st.floats(0, 1), st.sampled_from([1.0, 2.0, 3.0, 7.5]))
def test_energy_identity_exact(l1, l2, l3, TI, nu, theta, delta):
    # half trace of the tensor plus (delta/2) T_theta equals (3+delta)/2 T_delta
    mac = MacroState.from_fields(1.0, [0, 0, 0], np.diag([l1, l2, l3]), TI, delta)
    p = Params(nu, theta, delta)
    lhs = 0.5 * np.trace(corrected_tensor(mac, p).matrix) + 0.5 * delta * relaxation_temperature(mac, p)
    assert lhs == pytest.approx((3 + delta) / 2 * mac.T_delta, rel=1e-13)


def test_peak_value(grid_default):
    mac = MacroState.from_fields(1.0, [0, 0, 0], np.diag([0.8, 1.0, 1.2]), 0.9, 2.0)
    p = Params(0.5, 0.3, 2.0)
    fac = gaussian_factors(mac, p, grid_default)
    t = corrected_tensor(mac, p)
    T_theta = relaxation_temperature(mac, p)
    expected = lambda_delta(2.0) / (math.sqrt(np.linalg.det(2 * np.pi * t.matrix)) * T_theta)
    assert fac.prefactor == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("delta", [1.0, 2.0, 3.0, 7.5])
def test_gaussian_moments(delta, grids_by_delta):
    g = grids_by_delta(delta)
    Q = random_rotations(make_rng(5), 1)[0]
    Theta = Q.T @ np.diag([0.6, 0.9, 1.4]) @ Q
    mac = MacroState.from_fields(1.1, [0.2, -0.1, 0.05], Theta, 0.8, delta)
    p = Params(0.5, 0.4, delta)
    M = build_gaussian(mac, p, g)
    assert np.all(M > 0)
    mm = compute_macro(M, g)
    assert mm.rho == pytest.approx(1.1, abs=1e-6)
    np.testing.assert_allclose(mm.U, mac.U, atol=1e-6)
    np.testing.assert_allclose(mm.Theta, corrected_tensor(mac, p).matrix, atol=1e-6)
    assert mm.T_I == pytest.approx(relaxation_temperature(mac, p), abs=1e-6)


def test_isotropic_state_gives_maxwellian(grid_default):
    mac = MacroState.from_fields(1.0, [0.1, 0, 0], 0.9 * np.eye(3), 0.9, 2.0)
    ref = maxwellian(1.0, [0.1, 0, 0], 0.9, 2.0, grid_default)
    for nu, theta in [(0.0, 0.0), (0.5, 0.5), (0.9, 1.0)]:
        np.testing.assert_allclose(build_gaussian(mac, Params(nu, theta, 2.0), grid_default), ref,
                                   rtol=1e-12, atol=1e-300)


def test_maxwellian_fixed_point(grid_default):
    f = maxwellian(1.0, [0, 0, 0], 1.0, 2.0, grid_default)
    M = build_gaussian(compute_macro(f, grid_default), Params(0.5, 0.5, 2.0), grid_default)
    assert np.max(np.abs(M - f)) <= 1e-8


def test_maxwellian_mass(grid_default):
    f = maxwellian(1.0, [0, 0, 0], 1.0, 2.0, grid_default)
    assert compute_macro(f, grid_default).rho == pytest.approx(1.0, abs=1e-6)
    assert compute_macro(f, grid_default).T_tr == pytest.approx(1.0, abs=1e-6)


def test_maxwellian_rejects(grid_coarse):
    with pytest.raises(ParameterError):
        maxwellian(0.0, [0, 0, 0], 1.0, 2.0, grid_coarse)


def test_delta_mismatch(grid_coarse):
    mac = MacroState.from_fields(1.0, [0, 0, 0], np.eye(3), 1.0, 3.0)
    with pytest.raises(ParameterError):
        build_gaussian(mac, Params(0, 1, 3.0), grid_coarse)


def test_conservation_identity_random_f(grid_default):
    f = random_distribution(make_rng(11), grid_default)
    mac = compute_macro(f, grid_default)
    M = build_gaussian(mac, Params(0.5, 0.5, 2.0), grid_default)
    diff = conserved_moments(M, grid_default) - conserved_moments(f, grid_default)
    scale = np.array([mac.rho, mac.rho, mac.rho, mac.rho, mac.total_energy])
    assert np.max(np.abs(diff) / scale) <= 1e-6


def test_gamma_oracle_normalization(grid_default):
    # separable integral of exp(-eps / T): Gamma(delta/2 + 1) T^(delta/2)
    T = 0.7
    assert np.sum(np.exp(-grid_default.eps / T) * grid_default.u) == pytest.approx(gamma(2.0) * T, rel=1e-10)

import numpy as np
import pytest

from polykin.entropy import boltzmann_entropy
from polykin.errors import ParameterError, StabilityError
from polykin.gaussian import anisotropic_gaussian, build_gaussian, gaussian_factors, maxwellian
from polykin.moments import collision_frequency, compute_macro, conserved_moments
from polykin.params import Params
from polykin.quadrature import GridSpec, build_grid
from polykin.relaxation import (
    RunConfig,
    SlabSpec,
    conservative_projection,
    run_homogeneous,
    run_slab,
    step_homogeneous,
    step_transport_1d,
)
from polykin.sampling import make_rng, random_distribution

P = Params(0.5, 0.5, 2.0)


def _cfg(spec, A, dt_A=0.1, t_A=1.0, **kw):
    return RunConfig(params=kw.pop("params", P), grid=spec, t_end=t_A / A, dt=dt_A / A, **kw)


def _aniso(grid):
    cov = np.array([[1.2, 0.15, 0.0], [0.15, 0.9, 0.05], [0.0, 0.05, 0.8]])
    return anisotropic_gaussian(1.0, [0.1, 0, 0], cov, 0.7, grid)


@pytest.mark.parametrize("scheme", ["exponential", "explicit-euler", "rk4"])
def test_equilibrium_fixed_point(scheme, grid_default):
    f = maxwellian(1.0, [0, 0, 0], 1.0, 2.0, grid_default)
    A = collision_frequency(compute_macro(f, grid_default), P)
    f1 = step_homogeneous(f, _cfg(grid_default.spec, A, 0.5, scheme=scheme), grid_default)
    assert np.max(np.abs(f1 - f)) <= 1e-12 * f.max()


def test_euler_unit_step_lands_on_gaussian(grid_coarse):
    f = _aniso(grid_coarse)
    mac = compute_macro(f, grid_coarse)
    A = collision_frequency(mac, P)
    f1 = step_homogeneous(f, _cfg(grid_coarse.spec, A, 1.0, scheme="explicit-euler"), grid_coarse)
    np.testing.assert_allclose(f1, build_gaussian(mac, P, grid_coarse), rtol=1e-13, atol=1e-300)


def test_euler_step_moment_drift(grid_default):
    # dT_tr/dt = A theta (T_delta - T_tr): one small explicit step matches to O(dt^2)
    f = _aniso(grid_default)
    mac = compute_macro(f, grid_default)
    A = collision_frequency(mac, P)
    h = 1e-3
    f1 = step_homogeneous(f, _cfg(grid_default.spec, A, h, scheme="explicit-euler"), grid_default)
    got = compute_macro(f1, grid_default).T_tr - mac.T_tr
    want = P.theta * h * (mac.T_delta - mac.T_tr)
    assert got == pytest.approx(want, rel=1e-5)


def test_euler_stability_enforced(grid_coarse):
    f = _aniso(grid_coarse)
    A = collision_frequency(compute_macro(f, grid_coarse), P)
    with pytest.raises(StabilityError):
        step_homogeneous(f, _cfg(grid_coarse.spec, A, 1.5, scheme="explicit-euler"), grid_coarse)


def test_config_validation(grid_coarse):
    with pytest.raises(ParameterError):
        RunConfig(P, grid_coarse.spec, 1.0, 0.1, scheme="leapfrog")
    with pytest.raises(ParameterError):
        RunConfig(P, grid_coarse.spec, 1.0, -0.1)
    with pytest.raises(ParameterError):
        RunConfig(Params(0.5, 0.5, 3.0), grid_coarse.spec, 1.0, 0.1)


# --- projection ---------------------------------------------------------------------

def test_projection_identity_when_matching(grid_default):
    f = maxwellian(1.0, [0, 0, 0], 1.0, 2.0, grid_default)
    mac = compute_macro(f, grid_default)
    fac = gaussian_factors(mac, P, grid_default)
    _, info = conservative_projection(fac, mac, grid_default, return_info=True)
    assert np.max(np.abs(info["coefficients"])) < 1e-10


def test_projection_on_coarse_grid():
    # deliberately tight box so the rebuilt Gaussian loses visible mass and energy
    g = build_grid(GridSpec(4.0, 16, 12.0, 8, 2.0))
    f = random_distribution(make_rng(2), g)
    mac = compute_macro(f, g)
    M = build_gaussian(mac, P, g)
    c_f = conserved_moments(f, g)
    before = np.max(np.abs(conserved_moments(M, g) - c_f) / np.abs(c_f).max())
    Mp = conservative_projection(M, mac, g)
    after = np.max(np.abs(conserved_moments(Mp, g) - c_f) / np.abs(c_f).max())
    assert before > 1e-5
    assert after <= 1e-12
    assert np.all(Mp > 0)


def test_projection_factors_and_nodes_agree(grid_coarse):
    f = random_distribution(make_rng(6), grid_coarse)
    mac = compute_macro(f, grid_coarse)
    fac = gaussian_factors(mac, P, grid_coarse)
    a = conservative_projection(fac, mac, grid_coarse).values()
    b = conservative_projection(fac.values(), mac, grid_coarse)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-300)


# --- homogeneous runs -----------------------------------------------------------------

def test_equilibrium_run_flat(grid_default):
    f = maxwellian(1.0, [0, 0, 0], 1.0, 2.0, grid_default)
    A = collision_frequency(compute_macro(f, grid_default), P)
    tr = run_homogeneous(f, _cfg(grid_default.spec, A, 0.2, 2.0), grid_default)
    H = np.asarray(tr.step_H)
    assert np.ptp(H) <= 1e-12 * abs(H[0])
    assert max(abs(d) for d in tr.D) <= 1e-6


def test_converges_to_maxwellian():
    g = build_grid(GridSpec.for_temperature(2.0, t_max=1.5, v_points=20, energy_points=16))
    f = random_distribution(make_rng(21), g)
    mac = compute_macro(f, g)
    A = collision_frequency(mac, P)
    tr = run_homogeneous(f, _cfg(g.spec, A, 0.5, 60.0, conservative_projection=True,
                                 sample_every=1000), g)
    ref = maxwellian(mac.rho, mac.U, mac.T_delta, 2.0, g)
    assert np.max(np.abs(tr.final - ref)) <= 1e-6
    assert np.all(np.diff(tr.step_H) <= 1e-10)


def test_entropy_production_vanishes_late(grid_default):
    # D decays roughly like exp(-A t); 1e-8 needs about 20 collision times here
    p = Params(0.5, 0.5, 2.0)
    f0 = random_distribution(make_rng(20240611), grid_default)
    A = float(collision_frequency(compute_macro(f0, grid_default), p))
    cfg = RunConfig(p, grid_default.spec, t_end=20.0 / A, dt=0.1 / A, sample_every=50)
    tr = run_homogeneous(f0, cfg, grid_default)
    assert tr.D[-1] <= 1e-8
    assert tr.max_h_increase <= 1e-10


def test_trajectory_rows(grid_coarse):
    f = _aniso(grid_coarse)
    A = collision_frequency(compute_macro(f, grid_coarse), P)
    tr = run_homogeneous(f, _cfg(grid_coarse.spec, A, 0.25, 1.0, sample_every=2), grid_coarse)
    rows = tr.rows()
    assert len(rows) == 3 and rows[-1]["t"] == pytest.approx(1.0 / A)
    assert tr.D[-1] < tr.D[0]


# --- transport and slab ----------------------------------------------------------------

def test_transport_uniform_unchanged(grid_coarse):
    cell = maxwellian(1.0, [0, 0, 0], 1.0, 2.0, grid_coarse)
    field = np.stack([cell] * 5)
    out = step_transport_1d(field, grid_coarse, 0.2, 0.9 * 0.2 / grid_coarse.v.max())
    np.testing.assert_array_equal(out, field)


def test_transport_pulse_mass(grid_coarse):
    cell = maxwellian(1.0, [0, 0, 0], 1.0, 2.0, grid_coarse)
    field = np.zeros((8,) + grid_coarse.shape)
    field[3] = cell
    dx, dt = 0.125, 0.5 * 0.125 / grid_coarse.v.max()
    out = step_transport_1d(field, grid_coarse, dx, dt)
    m0 = conserved_moments(field, grid_coarse).sum(axis=0)
    m1 = conserved_moments(out, grid_coarse).sum(axis=0)
    assert m1[0] == pytest.approx(m0[0], rel=1e-15)
    # node j moves |v_j| dt / dx of its mass to the upwind neighbour
    j = grid_coarse.n - 1
    frac = grid_coarse.v[j] * dt / dx
    np.testing.assert_allclose(out[4][j], frac * field[3][j], rtol=1e-14)
    np.testing.assert_allclose(out[3][j], (1 - frac) * field[3][j], rtol=1e-14)
    # symmetric data keeps zero total momentum
    assert abs(m1[1]) <= 1e-15 * m1[0]


def test_transport_cfl(grid_coarse):
    field = np.ones((4,) + grid_coarse.shape)
    with pytest.raises(StabilityError):
        step_transport_1d(field, grid_coarse, 0.1, 0.2 / grid_coarse.v.max())


def test_slab_uniform_equilibrium_stationary(grid_default):
    cell = maxwellian(1.0, [0, 0, 0], 1.0, 2.0, grid_default)
    field = np.stack([cell] * 3)
    slab = SlabSpec(3, 1.0)
    dt = 0.9 * slab.dx / grid_default.v.max()
    cfg = RunConfig(P, grid_default.spec, 5 * dt, dt, slab=slab)
    tr = run_slab(field, cfg, grid_default)
    assert np.max(np.abs(tr.final - field)) <= 1e-12 * field.max()


def test_slab_needs_config(grid_coarse):
    cfg = RunConfig(P, grid_coarse.spec, 1.0, 0.1)
    with pytest.raises(ParameterError):
        run_slab(np.ones((2,) + grid_coarse.shape), cfg, grid_coarse)


def test_slab_entropy_decreases(grid_coarse):
    x = (np.arange(6) + 0.5) / 6
    field = np.stack([anisotropic_gaussian(1.0, [0, 0, 0], (1 + 0.2 * np.sin(2 * np.pi * xi)) * np.eye(3),
                                           1 - 0.2 * np.sin(2 * np.pi * xi), grid_coarse) for xi in x])
    slab = SlabSpec(6, 1.0)
    dt = 0.9 * slab.dx / grid_coarse.v.max()
    tr = run_slab(field, RunConfig(P, grid_coarse.spec, 20 * dt, dt, slab=slab,
                                   conservative_projection=True, sample_every=5), grid_coarse)
    assert np.all(np.diff(tr.step_H) <= 1e-8)
    assert tr.max_drift()["mass"] <= 1e-12
    total = sum(boltzmann_entropy(c, grid_coarse) for c in tr.final) * slab.dx
    assert total == pytest.approx(tr.step_H[-1], rel=1e-12)

"""Corrected temperature tensor and the polyatomic Gaussian.

The Gaussian built from a state (rho, U, Theta, T_I) is

    rho * Lambda_delta / (sqrt(det(2 pi T)) * T_theta^(delta/2))
        * exp(-(v - U)^T T^{-1} (v - U) / 2 - eps / T_theta)

with T the corrected tensor, T_theta the relaxation temperature and
eps = I^(2/delta).  It factors into a velocity part and an energy part,
which is how it is evaluated on the grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate as sp_integrate
from scipy import special

from .eigen import jacobi_eigh
from .errors import ParameterError, TensorNotPositiveDefinite
from .moments import MacroState
from .params import Params
from .quadrature import Grid

log = logging.getLogger(__name__)

SPD_RTOL = 1e-12


@lru_cache(maxsize=64)
def lambda_delta(delta: float) -> float:
    """Normalizing factor 1 / int_0^inf exp(-I^(2/delta)) dI = 1 / Gamma(delta/2 + 1)."""
    if not (delta > 0 and math.isfinite(delta)):
        raise ParameterError(f"delta must be positive, got {delta}")
    lam = 1.0 / special.gamma(delta / 2.0 + 1.0)
    check = 1.0 / lambda_delta_quadrature(delta)
    if abs(check / lam - 1.0) > 1e-8:
        log.warning("Lambda_delta cross-check mismatch for delta=%g: %r vs %r", delta, lam, check)
    return lam


def lambda_delta_quadrature(delta: float) -> float:
    """int_0^inf exp(-I^(2/delta)) dI by adaptive quadrature in I itself."""
    val, _ = sp_integrate.quad(lambda I: math.exp(-(I ** (2.0 / delta))), 0.0, np.inf,
                               epsabs=0.0, epsrel=1e-12, limit=200)
    return val


@dataclass(frozen=True, eq=False)
class CorrectedTensor:
    matrix: np.ndarray
    eigvals: np.ndarray  # A_1..A_3, ascending
    frame: np.ndarray  # orthogonal P, eigenvectors in columns
    det: np.ndarray | float
    inverse: np.ndarray


def corrected_tensor(mac: MacroState, params: Params) -> CorrectedTensor:
    nu, th = params.nu, params.theta
    T_tr = np.asarray(mac.T_tr)[..., None, None]
    T_d = np.asarray(mac.T_delta)[..., None, None]
    eye = np.eye(3)
    mat = (1.0 - th) * ((1.0 - nu) * T_tr * eye + nu * mac.Theta) + th * T_d * eye
    mat = 0.5 * (mat + np.swapaxes(mat, -1, -2))
    w, P = jacobi_eigh(mat)
    floor = SPD_RTOL * np.asarray(mac.T_delta)
    if np.any(w[..., 0] <= floor):
        raise TensorNotPositiveDefinite(
            f"corrected tensor not positive definite (min eigenvalue {np.min(w[..., 0]):.3e}, "
            f"nu={nu}, theta={th})"
        )
    inv = np.einsum("...ik,...k,...jk->...ij", P, 1.0 / w, P)
    det = np.prod(w, axis=-1)
    return CorrectedTensor(matrix=mat, eigvals=w, frame=P,
                           det=float(det) if np.ndim(det) == 0 else det, inverse=inv)


def relaxation_temperature(mac: MacroState, params: Params):
    return (1.0 - params.theta) * mac.T_I + params.theta * mac.T_delta


def quadratic_form(inv: np.ndarray, U: np.ndarray, grid: Grid) -> np.ndarray:
    """(v - U)^T inv (v - U) / 2 on the velocity lattice, shape ``(..., n, n, n)``."""
    n = grid.n
    v = grid.v
    c0 = (v - U[..., 0, None])[..., :, None, None]
    c1 = (v - U[..., 1, None])[..., None, :, None]
    c2 = (v - U[..., 2, None])[..., None, None, :]
    S = inv[..., None, None, None, :, :]
    q = (S[..., 0, 0] * c0 * c0 + S[..., 1, 1] * c1 * c1 + S[..., 2, 2] * c2 * c2
         + 2.0 * (S[..., 0, 1] * c0 * c1 + S[..., 0, 2] * c0 * c2 + S[..., 1, 2] * c1 * c2))
    return 0.5 * np.broadcast_to(q, q.shape[:-3] + (n, n, n))


@dataclass(frozen=True, eq=False)
class GaussianFactors:
    """Separable pieces: values = prefactor * velocity[..., None] * energy."""

    prefactor: np.ndarray | float
    velocity: np.ndarray  # exp(-q_v), (..., n, n, n)
    energy: np.ndarray  # exp(-eps / T_theta), (..., m)
    tensor: CorrectedTensor
    T_theta: np.ndarray | float

    def values(self) -> np.ndarray:
        pre = np.asarray(self.prefactor)[..., None, None, None]
        return (pre * self.velocity)[..., None] * self.energy[..., None, None, None, :]


def _factors(rho, U, inv, det, T_int, grid: Grid):
    delta = grid.delta
    pre = (np.asarray(rho) * lambda_delta(delta)
           / (np.sqrt((2.0 * np.pi) ** 3 * np.asarray(det)) * np.asarray(T_int) ** (delta / 2.0)))
    vel = np.exp(-quadratic_form(inv, np.asarray(U, dtype=float), grid))
    en = np.exp(-grid.eps / np.asarray(T_int)[..., None])
    return pre, vel, en


def gaussian_factors(mac: MacroState, params: Params, grid: Grid) -> GaussianFactors:
    tensor = corrected_tensor(mac, params)
    T_theta = relaxation_temperature(mac, params)
    pre, vel, en = _factors(mac.rho, mac.U, tensor.inverse, tensor.det, T_theta, grid)
    return GaussianFactors(prefactor=pre, velocity=vel, energy=en, tensor=tensor, T_theta=T_theta)


def build_gaussian(mac: MacroState, params: Params, grid: Grid) -> np.ndarray:
    """The polyatomic Gaussian of ``mac`` evaluated at every grid node."""
    if mac.delta != grid.delta:
        raise ParameterError(f"state delta {mac.delta} differs from grid delta {grid.delta}")
    return gaussian_factors(mac, params, grid).values()


def maxwellian(rho: float, U, T: float, delta: float, grid: Grid) -> np.ndarray:
    """Isotropic equilibrium: the Gaussian with Theta = T Id and T_I = T."""
    if not (rho > 0 and T > 0):
        raise ParameterError(f"maxwellian needs rho > 0 and T > 0, got rho={rho}, T={T}")
    mac = MacroState.from_fields(rho, np.asarray(U, dtype=float), T * np.eye(3), T, delta)
    return build_gaussian(mac, Params(0.0, 1.0, delta), grid)


def anisotropic_gaussian(rho: float, U, cov, T_int: float, grid: Grid) -> np.ndarray:
    """Gaussian with an arbitrary SPD velocity covariance and internal temperature.

    Test fixture and building block of mixture data; not tied to (nu, theta).
    """
    cov = np.asarray(cov, dtype=float)
    w, P = jacobi_eigh(cov)
    if np.any(w <= 0) or rho <= 0 or T_int <= 0:
        raise ParameterError("anisotropic_gaussian needs rho, T_int > 0 and SPD covariance")
    inv = (P / w) @ P.T
    pre, vel, en = _factors(rho, U, inv, np.prod(w), T_int, grid)
    return (pre * vel)[..., None] * en

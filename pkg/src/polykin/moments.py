"""Macroscopic fields and equipartition temperatures of a distribution.

All functions accept a single distribution of shape ``grid.shape`` or a
batch with extra leading axes (one state per spatial cell); the fields of
the returned :class:`MacroState` then carry the same leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import checked_marginals
from .errors import DataError, ParameterError, VacuumError
from .params import Params
from .quadrature import Grid, _check_shape

VACUUM_RHO = 1e-12
FREQUENCY_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class MacroState:
    rho: np.ndarray | float
    U: np.ndarray
    Theta: np.ndarray
    E_tr: np.ndarray | float
    E_I: np.ndarray | float
    T_tr: np.ndarray | float
    T_I: np.ndarray | float
    T_delta: np.ndarray | float
    delta: float

    @classmethod
    def from_fields(cls, rho, U, Theta, T_I, delta: float) -> "MacroState":
        """Assemble a state from rho, U, Theta and T_I using equipartition."""
        rho = np.asarray(rho, dtype=float)
        Theta = np.asarray(Theta, dtype=float)
        Theta = 0.5 * (Theta + np.swapaxes(Theta, -1, -2))
        T_I = np.asarray(T_I, dtype=float)
        T_tr = np.trace(Theta, axis1=-2, axis2=-1) / 3.0
        return cls(
            rho=_scalar(rho),
            U=np.asarray(U, dtype=float),
            Theta=Theta,
            E_tr=_scalar(1.5 * rho * T_tr),
            E_I=_scalar(0.5 * delta * rho * T_I),
            T_tr=_scalar(T_tr),
            T_I=_scalar(T_I),
            T_delta=_scalar((3.0 * T_tr + delta * T_I) / (3.0 + delta)),
            delta=float(delta),
        )

    @property
    def E_delta(self):
        return self.E_tr + self.E_I

    @property
    def total_energy(self):
        """Energy including bulk motion, the conserved quantity."""
        return self.E_tr + self.E_I + 0.5 * self.rho * np.sum(self.U**2, axis=-1)

    def to_dict(self) -> dict:
        def conv(x):
            return x.tolist() if isinstance(x, np.ndarray) else float(x)

        return {
            "rho": conv(self.rho),
            "U": conv(self.U),
            "Theta": conv(self.Theta),
            "E_tr": conv(self.E_tr),
            "E_I": conv(self.E_I),
            "T_tr": conv(self.T_tr),
            "T_I": conv(self.T_I),
            "T_delta": conv(self.T_delta),
            "delta": self.delta,
        }

    def cell(self, i: int) -> "MacroState":
        """Single-cell view of a batched state."""
        return MacroState(
            rho=float(self.rho[i]),
            U=self.U[i],
            Theta=self.Theta[i],
            E_tr=float(self.E_tr[i]),
            E_I=float(self.E_I[i]),
            T_tr=float(self.T_tr[i]),
            T_I=float(self.T_I[i]),
            T_delta=float(self.T_delta[i]),
            delta=self.delta,
        )


def _scalar(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def check_distribution(f, grid: Grid) -> np.ndarray:
    f = _check_shape(f, grid)
    if not np.all(np.isfinite(f)):
        raise DataError("distribution contains non-finite values")
    if np.any(f < 0):
        raise DataError(f"distribution has negative values (min {f.min():.3e})")
    return f


def _marginals(f, grid: Grid):
    """Validated velocity marginal (..., n, n, n) and energy marginal (..., m)."""
    f = np.ascontiguousarray(_check_shape(f, grid))
    batch = f.shape[:-4]
    n, m = grid.n, grid.eps.size
    return checked_to_marginals(checked_marginals(f.reshape(-1, n**3, m), grid.u), batch, grid)


def checked_to_marginals(result, batch, grid: Grid):
    """Validate a (fv, fe, min, finite) kernel result and shape the marginals."""
    fv, fe, lo, finite = result
    if not finite:
        raise DataError("distribution contains non-finite values")
    if lo < 0:
        raise DataError(f"distribution has negative values (min {lo:.3e})")
    n, m = grid.n, grid.eps.size
    return fv.reshape(batch + (n, n, n)), fe.reshape(batch + (m,)) * grid.dv


def compute_macro(f, grid: Grid) -> MacroState:
    return macro_from_marginals(*_marginals(f, grid), grid)


def macro_from_marginals(fv, fe, grid: Grid) -> MacroState:
    """Moments from the velocity marginal and the dv-scaled energy marginal."""
    dv = grid.dv
    v = grid.v

    rho = fv.sum(axis=(-3, -2, -1)) * dv
    if np.any(rho < VACUUM_RHO):
        raise VacuumError(f"vacuum state: rho = {np.min(rho):.3e}")

    # one-dimensional marginals along each velocity axis
    m1 = [fv.sum(axis=(-2, -1)), fv.sum(axis=(-3, -1)), fv.sum(axis=(-3, -2))]
    U = np.stack([(mi @ v) * dv for mi in m1], axis=-1) / rho[..., None]

    # second pass about the discrete mean velocity
    c = [v - U[..., i, None] for i in range(3)]  # (..., n)
    Theta = np.empty(rho.shape + (3, 3))
    for i in range(3):
        Theta[..., i, i] = np.einsum("...k,...k->...", m1[i], c[i] ** 2) * dv
    m01 = fv.sum(axis=-1)
    m02 = fv.sum(axis=-2)
    m12 = fv.sum(axis=-3)
    Theta[..., 0, 1] = np.einsum("...ij,...i,...j->...", m01, c[0], c[1]) * dv
    Theta[..., 0, 2] = np.einsum("...ij,...i,...j->...", m02, c[0], c[2]) * dv
    Theta[..., 1, 2] = np.einsum("...ij,...i,...j->...", m12, c[1], c[2]) * dv
    Theta[..., 1, 0] = Theta[..., 0, 1]
    Theta[..., 2, 0] = Theta[..., 0, 2]
    Theta[..., 2, 1] = Theta[..., 1, 2]
    Theta /= rho[..., None, None]

    E_I = fe @ (grid.eps * grid.u)

    delta = grid.delta
    T_tr = np.trace(Theta, axis1=-2, axis2=-1) / 3.0
    E_tr = 1.5 * rho * T_tr
    T_I = 2.0 * E_I / (delta * rho)
    return MacroState(
        rho=_scalar(rho),
        U=U,
        Theta=Theta,
        E_tr=_scalar(E_tr),
        E_I=_scalar(E_I),
        T_tr=_scalar(T_tr),
        T_I=_scalar(T_I),
        T_delta=_scalar((3.0 * T_tr + delta * T_I) / (3.0 + delta)),
        delta=delta,
    )


def conserved_moments(f, grid: Grid) -> np.ndarray:
    """Discrete (rho, rho U, total energy) of f, shape ``(..., 5)``."""
    fv, fe = _marginals(f, grid)
    dv, v = grid.dv, grid.v
    out = np.empty(fv.shape[:-3] + (5,))
    out[..., 0] = fv.sum(axis=(-3, -2, -1)) * dv
    out[..., 1] = fv.sum(axis=(-2, -1)) @ v * dv
    out[..., 2] = fv.sum(axis=(-3, -1)) @ v * dv
    out[..., 3] = fv.sum(axis=(-3, -2)) @ v * dv
    kinetic = 0.5 * np.einsum("...ijk,ijk->...", fv, grid.speed_squared()) * dv
    out[..., 4] = kinetic + fe @ (grid.eps * grid.u)
    return out


def collision_frequency(mac: MacroState, params: Params):
    """rho T_delta / (1 - nu + nu theta)."""
    denom = 1.0 - params.nu + params.nu * params.theta
    if denom <= FREQUENCY_FLOOR:
        raise ParameterError(f"collision frequency denominator {denom:.3e} is not positive")
    return mac.rho * mac.T_delta / denom

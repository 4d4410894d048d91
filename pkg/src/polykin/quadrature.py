"""Discretization of velocity and internal energy, and integration over it.

Velocity is a uniform midpoint lattice on the cube [-L, L]^3.  The internal
variable I is handled through the energy variable eps = I^(2/delta): since
dI = (delta/2) eps^(delta/2 - 1) d eps, the integral over I becomes a
Jacobi-weighted integral over eps in (0, eps_max].  We integrate it with a
Gauss-Jacobi rule so the algebraic endpoint factor is absorbed into the
weights and no node sits at eps = 0.

Distribution arrays have shape ``(n, n, n, m)`` (velocity axes first, energy
last), optionally with leading batch axes such as spatial cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import GridError

MIN_VELOCITY_POINTS = 8
MIN_ENERGY_POINTS = 8


@dataclass(frozen=True)
class GridSpec:
    v_extent: float
    v_points_per_axis: int
    energy_variable_max: float
    energy_points: int
    delta: float

    def __post_init__(self):
        if not (self.v_extent > 0 and math.isfinite(self.v_extent)):
            raise GridError(f"v_extent must be positive, got {self.v_extent}")
        if not (self.energy_variable_max > 0 and math.isfinite(self.energy_variable_max)):
            raise GridError(
                f"energy_variable_max must be positive, got {self.energy_variable_max}"
            )
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise GridError(f"delta must be positive, got {self.delta}")
        if int(self.v_points_per_axis) != self.v_points_per_axis or (
            self.v_points_per_axis < MIN_VELOCITY_POINTS
        ):
            raise GridError(
                f"v_points_per_axis must be an integer >= {MIN_VELOCITY_POINTS}, "
                f"got {self.v_points_per_axis}"
            )
        if self.v_points_per_axis % 2:
            raise GridError("v_points_per_axis must be even")
        if int(self.energy_points) != self.energy_points or (
            self.energy_points < MIN_ENERGY_POINTS
        ):
            raise GridError(
                f"energy_points must be an integer >= {MIN_ENERGY_POINTS}, "
                f"got {self.energy_points}"
            )

    @classmethod
    def for_temperature(
        cls,
        delta: float,
        t_max: float = 2.0,
        u_max: float = 0.0,
        v_points: int = 32,
        energy_points: int = 32,
    ) -> "GridSpec":
        """Default sizing: L = 6 sqrt(T_max) + |U|, eps_max = 30 T_max."""
        return cls(
            v_extent=6.0 * math.sqrt(t_max) + abs(u_max),
            v_points_per_axis=v_points,
            energy_variable_max=30.0 * t_max,
            energy_points=energy_points,
            delta=delta,
        )

    @classmethod
    def preset(cls, name: str, delta: float) -> "GridSpec":
        try:
            v_points, e_points = PRESETS[name]
        except KeyError:
            raise GridError(f"unknown grid preset {name!r}; choose from {sorted(PRESETS)}")
        return cls.for_temperature(delta, v_points=v_points, energy_points=e_points)

    def to_dict(self) -> dict:
        return {
            "v_extent": self.v_extent,
            "v_points_per_axis": self.v_points_per_axis,
            "energy_variable_max": self.energy_variable_max,
            "energy_points": self.energy_points,
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(
            v_extent=float(d["v_extent"]),
            v_points_per_axis=int(d["v_points_per_axis"]),
            energy_variable_max=float(d["energy_variable_max"]),
            energy_points=int(d["energy_points"]),
            delta=float(d["delta"]),
        )


PRESETS = {"coarse": (16, 16), "default": (32, 32), "fine": (48, 32)}


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable node/weight arrays built from a :class:`GridSpec`."""

    spec: GridSpec
    v: np.ndarray  # 1D velocity nodes, shared by all three axes
    dv: float  # velocity cell volume h^3
    eps: np.ndarray  # energy-variable nodes eps_m = I_m^(2/delta)
    u: np.ndarray  # weights for dI, Jacobian folded in
    I: np.ndarray = field(repr=False)

    @property
    def delta(self) -> float:
        return self.spec.delta

    @property
    def n(self) -> int:
        return self.v.size

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n, self.n, self.n, self.eps.size)

    @property
    def h(self) -> float:
        return float(self.v[1] - self.v[0])

    @property
    def velocity_weights(self) -> np.ndarray:
        return np.full((self.n,) * 3, self.dv)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Velocity components shaped to broadcast against ``(n, n, n)``."""
        n = self.n
        return self.v.reshape(n, 1, 1), self.v.reshape(1, n, 1), self.v.reshape(1, 1, n)

    def speed_squared(self) -> np.ndarray:
        vx, vy, vz = self.axes()
        return vx**2 + vy**2 + vz**2


def build_grid(spec: GridSpec) -> Grid:
    n = spec.v_points_per_axis
    L = spec.v_extent
    h = 2.0 * L / n
    v = -L + h * (np.arange(n) + 0.5)
    # exact symmetry v -> -v, independent of rounding in the affine map
    v = 0.5 * (v - v[::-1])

    m = spec.energy_points
    alpha = spec.delta / 2.0 - 1.0
    x, wj = special.roots_jacobi(m, 0.0, alpha)  # weight (1 + x)^alpha on [-1, 1]
    half = spec.energy_variable_max / 2.0
    eps = half * (1.0 + x)
    u = (spec.delta / 2.0) * half ** (alpha + 1.0) * wj
    if not (np.all(np.isfinite(u)) and np.all(u > 0) and np.all(eps > 0)):
        raise GridError(f"energy quadrature degenerate for {spec}")
    I = eps ** (spec.delta / 2.0)
    for arr in (v, eps, u, I):
        arr.flags.writeable = False
    return Grid(spec=spec, v=v, dv=h**3, eps=eps, u=u, I=I)


def _check_shape(values: np.ndarray, grid: Grid) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape[-4:] != grid.shape:
        raise GridError(f"values shape {values.shape} does not end with grid shape {grid.shape}")
    return values


def velocity_marginal(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Integrate out the internal energy: sum_m values[..., m] u_m."""
    return _check_shape(values, grid) @ grid.u


def energy_marginal(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Integrate out velocity: sum_k values[..., k, m] w_k."""
    values = _check_shape(values, grid)
    return values.sum(axis=(-4, -3, -2)) * grid.dv


def integrate(values: np.ndarray, grid: Grid):
    """Sum of values * w_k * u_m over the grid.

    Leading axes beyond the grid shape are kept, so a slab field of shape
    ``(nx, n, n, n, m)`` gives one integral per cell.  Summation order is
    fixed (energy first, then velocity), making results bit-reproducible.
    """
    out = velocity_marginal(values, grid).sum(axis=(-3, -2, -1)) * grid.dv
    return float(out) if np.ndim(out) == 0 else out


def gaussian_tail_bounds(
    grid: Grid, cov_eigs, U, t_theta: float
) -> dict[str, float]:
    """Relative quadrature-error estimates for an anisotropic Gaussian.

    Terms: mass/energy lost outside the velocity box (using the largest
    covariance eigenvalue on every axis), midpoint aliasing from the
    Poisson summation formula (smallest eigenvalue), energy-variable
    truncation at eps_max, and the measured defect of the 1D energy rule
    for exp(-eps / t_theta).
    """
    lam = np.asarray(cov_eigs, dtype=float)
    lam_max, lam_min = float(lam.max()), float(lam.min())
    L, h = grid.spec.v_extent, grid.h
    sig = math.sqrt(lam_max)
    box = 0.0
    for ui in np.abs(np.asarray(U, dtype=float)):
        z = max(L - ui, 0.0) / sig
        box += math.erfc(z / math.sqrt(2)) + z * math.sqrt(2 / math.pi) * math.exp(-z * z / 2)
    r = 2.0 * math.pi**2 * lam_min / h**2
    alias = 3 * 2.0 * (1.0 + 2.0 * r) * math.exp(-r)

    a = grid.delta / 2.0
    x = grid.spec.energy_variable_max / t_theta
    trunc = float(special.gammaincc(a + 1.0, x))
    exact = math.gamma(a + 1.0) * t_theta**a * (1.0 - special.gammaincc(a, x))
    exact1 = math.gamma(a + 1.0) * a * t_theta ** (a + 1) * (1.0 - special.gammaincc(a + 1, x))
    w = np.exp(-grid.eps / t_theta) * grid.u
    rule = max(abs(w.sum() / exact - 1.0), abs((w * grid.eps).sum() / exact1 - 1.0))
    total = box + alias + trunc + rule
    return {
        "velocity_box": box,
        "velocity_aliasing": alias,
        "energy_truncation": trunc,
        "energy_rule": rule,
        "total": total,
    }

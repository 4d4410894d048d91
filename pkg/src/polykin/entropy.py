"""Entropy, entropy production and its decomposition into non-negative parts.

The production functional D = -int (M - f) ln f splits into the relative
part int (M - f)(ln M - ln f), non-negative node by node, plus a remainder
R = int (M - f) q with q = (v - U)^T T^{-1} (v - U) / 2 + eps / T_theta.
R is evaluated two ways: by quadrature of that integral, and from the
closed form rho/2 * (3 + delta - F_theta - delta T_I / T_theta) where
F_theta = sum_i Theta_i / A_i over the eigenvalues of Theta and of the
corrected tensor.  The closed-form bounds on F_theta and on the convex
curve used to close the argument live here too.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._kernels import xlogx_energy_sums
from .eigen import jacobi_eigh
from .errors import DataError, GridError, ParameterError
from .gaussian import (
    GaussianFactors,
    build_gaussian,
    corrected_tensor,
    quadratic_form,
    relaxation_temperature,
)
from .moments import MacroState, check_distribution, compute_macro
from .params import Params
from .quadrature import Grid, integrate

LOG_FLOOR = 1e-300  # log floor for the D and compactness integrands
CLOSED_TOL = 1e-12


def _safe_log(x: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(x, LOG_FLOOR))


def boltzmann_entropy(f, grid: Grid, check: bool = True):
    """int f ln f, with 0 ln 0 = 0.

    ``check=False`` skips the finiteness/sign scan for states the solver
    produced itself.
    """
    f = check_distribution(f, grid) if check else np.asarray(f)
    m = grid.eps.size
    flat = np.ascontiguousarray(f).reshape(-1, m)
    per_node = xlogx_energy_sums(flat, grid.u)
    out = per_node.reshape(f.shape[:-4] + (-1,)).sum(axis=-1) * grid.dv
    return float(out) if np.ndim(out) == 0 else out


def entropy_production(f, mgauss, grid: Grid):
    """Return (D, relative_part).

    Logs use max(value, 1e-300).  A node where both f and M sit below the
    floor contributes nothing; a node where only one does is evaluated with
    the floored logarithm, so its contribution stays finite and keeps the
    sign of (M - f)(ln M - ln f).
    """
    f = check_distribution(f, grid)
    mgauss = check_distribution(mgauss, grid)
    if f.shape != mgauss.shape:
        raise GridError(f"shape mismatch {f.shape} vs {mgauss.shape}")
    both_tiny = (f < LOG_FLOOR) & (mgauss < LOG_FLOOR)
    diff = mgauss - f
    lf = _safe_log(f)
    d_int = np.where(both_tiny, 0.0, -diff * lf)
    rel_int = np.where(both_tiny, 0.0, diff * (_safe_log(mgauss) - lf))
    return integrate(d_int, grid), integrate(rel_int, grid)


@dataclass(frozen=True, eq=False)
class Marginals:
    """Velocity marginal sum_m g u_m and energy marginal sum_k g of a node array."""

    velocity: np.ndarray
    energy: np.ndarray


def marginals(values, grid: Grid) -> Marginals:
    if isinstance(values, Marginals):
        return values
    if isinstance(values, GaussianFactors):
        pre = np.asarray(values.prefactor)
        gv = (pre * (values.energy @ grid.u))[..., None, None, None] * values.velocity
        ge = (pre * values.velocity.sum(axis=(-3, -2, -1)))[..., None] * values.energy
        return Marginals(gv, ge)
    values = check_distribution(values, grid)
    return Marginals(values @ grid.u, values.sum(axis=(-4, -3, -2)))


def remainder_quadrature(f, mgauss, mac: MacroState, params: Params, grid: Grid):
    """Quadrature of int (M - f) ((v-U)^T T^{-1} (v-U)/2 + eps/T_theta) dv dI.

    The weight is a velocity function plus an energy function, so the grid
    sum is taken through the velocity and energy marginals of M and f: the
    same discrete sum, reassociated.  ``mgauss`` may be the node array or
    the separable :class:`GaussianFactors`, which skips materializing it;
    either argument may also be precomputed :class:`Marginals`.
    """
    tensor = corrected_tensor(mac, params)
    T_theta = np.asarray(relaxation_temperature(mac, params))
    qv = quadratic_form(tensor.inverse, mac.U, grid)
    m, g = marginals(mgauss, grid), marginals(f, grid)
    if m.velocity.shape != g.velocity.shape:
        raise GridError(f"shape mismatch {m.velocity.shape} vs {g.velocity.shape}")
    vel = ((m.velocity - g.velocity) * qv).sum(axis=(-3, -2, -1))
    en = (m.energy - g.energy) @ (grid.eps * grid.u) / T_theta
    out = (vel + en) * grid.dv
    return float(out) if np.ndim(out) == 0 else out


def theta_eigenvalues(mac: MacroState) -> np.ndarray:
    w, _ = jacobi_eigh(mac.Theta)
    return w


def _a_values(theta_eigs, mac: MacroState, params: Params) -> np.ndarray:
    nu, th = params.nu, params.theta
    T_tr = np.asarray(mac.T_tr)[..., None]
    T_d = np.asarray(mac.T_delta)[..., None]
    return (1.0 - th) * ((1.0 - nu) * T_tr + nu * theta_eigs) + th * T_d


def remainder_closed_form(mac: MacroState, params: Params, eigs=None):
    """Return (R, F_theta) from the eigenvalues of Theta.

    Outside the theorem regime some A_i may be non-positive; both outputs
    are then NaN (undefined, degenerate tensor).  Pass ``eigs`` (from
    :func:`theta_eigenvalues`) to reuse them across parameter values.
    """
    if eigs is None:
        eigs = theta_eigenvalues(mac)
    A = _a_values(eigs, mac, params)
    degenerate = np.any(A <= 0.0, axis=-1)
    A_safe = np.where(A > 0.0, A, 1.0)
    F = np.where(degenerate, np.nan, (eigs / A_safe).sum(axis=-1))
    T_theta = relaxation_temperature(mac, params)
    d = mac.delta
    R = 0.5 * mac.rho * (3.0 + d - (F + d * mac.T_I / T_theta))
    if np.ndim(R) == 0:
        return float(R), float(F)
    return R, F


def f_theta_upper_bound(mac: MacroState, params: Params):
    th = params.theta
    return 3.0 * mac.T_tr / ((1.0 - th) * mac.T_tr + th * mac.T_delta)


def f_theta_bound(mac: MacroState, params: Params):
    """Return (F_theta, bound, ok) with bound = 3 T_tr / ((1-theta) T_tr + theta T_delta).

    For nu < 0 the bound is computed but ``ok`` is None: nothing is asserted.
    """
    _, F = remainder_closed_form(mac, params)
    bound = f_theta_upper_bound(mac, params)
    if not params.theorem_regime:
        return F, bound, None
    ok = np.asarray(F) <= np.asarray(bound) + CLOSED_TOL
    return F, bound, bool(ok) if np.ndim(ok) == 0 else ok


def convex_curve_values(A, B, delta, t):
    """3A/((1-t)A + tK) + delta B/((1-t)B + tK) with K = (3A + delta B)/(3 + delta).

    A term whose A (or B) is zero is 0/0 at t = 0; it takes its limit from
    positive A there (3, resp. delta) and is 0 for t > 0.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    t = np.asarray(t, dtype=float)
    K = (3.0 * A + delta * B) / (3.0 + delta)

    def term(c, X):
        zero = np.where(t == 0.0, c, 0.0)
        return np.where(X == 0.0, zero, c * X / np.where(X == 0.0, 1.0, (1 - t) * X + t * K))

    return term(3.0, A) + term(delta, B)


@dataclass(frozen=True)
class ConvexityCurve:
    t: np.ndarray
    values: np.ndarray
    ceiling: float  # 3 + delta
    max_excess: float  # max(F - ceiling)
    min_second_difference: float
    bounded: bool
    convex: bool


def convexity_curve(A: float, B: float, delta: float, t_nodes) -> ConvexityCurve:
    if A < 0 or B < 0:
        raise ParameterError("A and B must be non-negative")
    if A == 0 and B == 0:
        raise ParameterError("A = B = 0 is degenerate (0/0)")
    if delta <= 0:
        raise ParameterError("delta must be positive")
    t = np.asarray(t_nodes, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise ParameterError("t nodes must lie in [0, 1]")
    F = convex_curve_values(A, B, delta, t)
    ceiling = 3.0 + delta
    excess = float(np.max(F - ceiling))
    if t.size >= 3:
        d2 = F[2:] - 2.0 * F[1:-1] + F[:-2]
        min_d2 = float(d2.min())
    else:
        min_d2 = math.inf
    return ConvexityCurve(
        t=t, values=F, ceiling=ceiling, max_excess=excess, min_second_difference=min_d2,
        bounded=excess <= CLOSED_TOL, convex=min_d2 >= -1e-10,
    )


@dataclass(frozen=True)
class TheoremCheck:
    F_theta: float
    F_bound: float
    theorem_lhs: float  # F_theta + delta T_I / T_theta
    chain_value: float  # bound on F_theta fed through the convex curve at t = theta
    R_closed: float
    theorem_ok: bool | None  # None outside the theorem regime
    regime: bool


def theorem_check(mac: MacroState, params: Params, eigs=None):
    """Evaluate F_theta + delta T_I / T_theta <= 3 + delta and R >= 0.

    Also records the intermediate chain: the F_theta bound plus the
    internal term equals the convex curve at A = T_tr, B = T_I, t = theta,
    whose K coincides with T_delta.  Works on batched states; fields are then
    arrays.  Outside the theorem regime ``theorem_ok`` is None.
    """
    R, F = remainder_closed_form(mac, params, eigs)
    T_theta = relaxation_temperature(mac, params)
    d = mac.delta
    lhs = F + d * mac.T_I / T_theta
    bound = f_theta_upper_bound(mac, params)
    chain = convex_curve_values(mac.T_tr, mac.T_I, d, params.theta)
    if params.theorem_regime:
        ok = (np.asarray(lhs) <= 3.0 + d + CLOSED_TOL) & (np.asarray(R) >= -CLOSED_TOL)
        ok = bool(ok) if np.ndim(ok) == 0 else ok
    else:
        ok = None

    def conv(x):
        return float(x) if np.ndim(x) == 0 else np.asarray(x)

    return TheoremCheck(
        F_theta=conv(F), F_bound=conv(bound), theorem_lhs=conv(lhs), chain_value=conv(chain),
        R_closed=conv(R), theorem_ok=ok, regime=params.theorem_regime,
    )


def compactness_pointwise(f, mgauss, M_cut: float, relative: bool = False) -> float:
    """Worst violation of M <= M_cut f + (M - f)(ln M - ln f) / ln M_cut.

    Returns max over nodes of LHS - RHS, or of (LHS - RHS) / max(M, M_cut f)
    when ``relative`` is set.  Works for arbitrary positive arrays, not only
    grid-shaped ones.
    """
    if not M_cut > 1.0:
        raise ParameterError(f"M_cut must exceed 1, got {M_cut}")
    f = np.asarray(f, dtype=float)
    m = np.asarray(mgauss, dtype=float)
    if np.any(f <= 0) or np.any(m <= 0):
        raise DataError("compactness check needs strictly positive f and M")
    rhs = M_cut * f + (m - f) * (np.log(m) - np.log(f)) / math.log(M_cut)
    gap = m - rhs
    if relative:
        gap = gap / np.maximum(m, M_cut * f)
    return float(np.max(gap))


@dataclass(frozen=True)
class EntropyReport:
    H: float
    D: float
    relative_part: float
    R_quad: float
    R_closed: float
    F_theta: float
    F_bound: float
    theorem_lhs: float
    theorem_ok: bool | None
    regime: bool
    decomposition_residual: float  # D - relative_part - R_quad

    def to_dict(self) -> dict:
        return asdict(self)


def entropy_report(f, params: Params, grid: Grid, mac: MacroState | None = None) -> EntropyReport:
    """Full decomposition for one distribution."""
    if mac is None:
        mac = compute_macro(f, grid)
    mg = build_gaussian(mac, params, grid)
    D, rel = entropy_production(f, mg, grid)
    Rq = remainder_quadrature(f, mg, mac, params, grid)
    chk = theorem_check(mac, params)
    return EntropyReport(
        H=boltzmann_entropy(f, grid), D=D, relative_part=rel, R_quad=Rq, R_closed=chk.R_closed,
        F_theta=chk.F_theta, F_bound=chk.F_bound, theorem_lhs=chk.theorem_lhs,
        theorem_ok=chk.theorem_ok, regime=chk.regime, decomposition_residual=D - rel - Rq,
    )

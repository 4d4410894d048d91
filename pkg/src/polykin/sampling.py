"""Seeded random states and distributions.

All randomness goes through :func:`make_rng`, a Philox counter-based
generator keyed by a single 64-bit seed, so ensembles are reproducible
from the seed alone.
"""

from __future__ import annotations

import numpy as np

from .gaussian import anisotropic_gaussian
from .moments import MacroState
from .quadrature import Grid

SAMPLER_DELTAS = (1.0, 2.0, 3.0, 5.0, 7.5)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def random_rotations(rng: np.random.Generator, n: int) -> np.ndarray:
    """Orthogonal matrices from QR of standard normal 3x3 matrices."""
    q, r = np.linalg.qr(rng.standard_normal((n, 3, 3)))
    # sign fix makes the distribution uniform (Haar)
    return q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[:, None, :]


def sample_macrostates(
    rng: np.random.Generator,
    n: int,
    delta: float,
    eig_range=(0.1, 10.0),
    t_int_range=(0.1, 10.0),
    rho_range=(0.5, 2.0),
) -> MacroState:
    """Batch of n states: Theta = Q^T diag(lam) Q with lam, T_I, rho uniform."""
    Q = random_rotations(rng, n)
    lam = rng.uniform(*eig_range, size=(n, 3))
    Theta = np.einsum("nki,nk,nkj->nij", Q, lam, Q)
    T_I = rng.uniform(*t_int_range, size=n)
    rho = rng.uniform(*rho_range, size=n)
    U = rng.standard_normal((n, 3))
    return MacroState.from_fields(rho, U, Theta, T_I, delta)


def random_distribution(
    rng: np.random.Generator,
    grid: Grid,
    components: int = 3,
    t_range=(0.4, 1.4),
    u_scale: float = 0.3,
) -> np.ndarray:
    """Positive, non-Gaussian f: a mixture of rotated anisotropic Gaussians.

    Each component has its own mean velocity, covariance eigenvalues and
    internal temperature drawn from ``t_range``, so the mixture is
    anisotropic and out of translational/internal equilibrium.
    """
    f = np.zeros(grid.shape)
    Q = random_rotations(rng, components)
    for k in range(components):
        lam = rng.uniform(*t_range, size=3)
        cov = Q[k].T @ np.diag(lam) @ Q[k]
        f += anisotropic_gaussian(
            rho=rng.uniform(0.2, 1.0),
            U=u_scale * rng.standard_normal(3),
            cov=cov,
            T_int=rng.uniform(*t_range),
            grid=grid,
        )
    return f

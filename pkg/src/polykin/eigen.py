"""Cyclic Jacobi eigensolver for (batches of) symmetric 3x3 matrices.

Rotations are applied to every matrix of the batch at once; matrices that
are already diagonal get the identity rotation.  Jacobi is preferred over
the closed-form cubic because it stays accurate for near-degenerate
spectra, which is exactly the isotropic limit the entropy bounds care
about.
"""

from __future__ import annotations

import numpy as np

TOL = 1e-13
MAX_SWEEPS = 30
_PAIRS = ((0, 1), (0, 2), (1, 2))


def _off_norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(a[..., 0, 1] ** 2 + a[..., 0, 2] ** 2 + a[..., 1, 2] ** 2)


def jacobi_eigh(mat, tol: float = TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns).

    Iterates until every off-diagonal entry is below ``tol`` times the
    Frobenius norm of its matrix.  ``mat`` may be ``(3, 3)`` or ``(..., 3, 3)``.
    """
    a = np.array(mat, dtype=float)
    if a.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3), got {a.shape}")
    batch_shape = a.shape[:-2]
    a = a.reshape(-1, 3, 3)
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    v = np.broadcast_to(np.eye(3), a.shape).copy()
    scale = np.sqrt((a**2).sum(axis=(-2, -1)))
    idx = np.arange(a.shape[0])

    for _ in range(MAX_SWEEPS):
        if np.all(_off_norm(a) <= tol * scale):
            break
        for p, q in _PAIRS:
            apq = a[:, p, q]
            active = np.abs(apq) > 0.1 * tol * scale
            safe = np.where(active, apq, 1.0)
            theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rot = np.broadcast_to(np.eye(3), a.shape).copy()
            rot[idx, p, p] = c
            rot[idx, q, q] = c
            rot[idx, p, q] = s
            rot[idx, q, p] = -s
            a = np.swapaxes(rot, -1, -2) @ a @ rot
            a[idx, p, q] = 0.0
            a[idx, q, p] = 0.0
            v = v @ rot
    else:
        raise ArithmeticError("Jacobi iteration did not converge")

    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[:, None, :], axis=-1)
    return w.reshape(batch_shape + (3,)), v.reshape(batch_shape + (3, 3))

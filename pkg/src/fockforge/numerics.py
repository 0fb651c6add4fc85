"""Dense symmetric linear algebra for the SCF driver.

Symmetric matrices are plain square float64 ndarrays kept exactly symmetric
by construction. The eigensolver is a cyclic Jacobi iteration: diagonalization
is not the bottleneck of this artifact, so the simplest provably convergent
scheme wins over a faster one.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

JACOBI_MAX_SWEEPS = 50
JACOBI_OFF_TOL = 1e-12  # off(A) <= tol * ||A||_F
INV_SQRT_FLOOR = 1e-7


class JacobiError(RuntimeError):
    pass


def require_symmetric(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > 1e-12 * scale:
        raise ValueError(f"{name} is not symmetric")
    return a


@njit(cache=True, nogil=True)
def _jacobi_core(a, v, off_tol, max_sweeps):
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off2 = 0.0
        norm2 = 0.0
        for p in range(n):
            norm2 += a[p, p] * a[p, p]
            for q in range(p + 1, n):
                off2 += a[p, q] * a[p, q]
        norm2 += 2.0 * off2
        if math.sqrt(2.0 * off2) <= off_tol * math.sqrt(norm2) or norm2 == 0.0:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return -1


def jacobi_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvector columns.

    Raises JacobiError if the off-diagonal norm has not dropped below
    JACOBI_OFF_TOL * ||A||_F after JACOBI_MAX_SWEEPS cyclic sweeps.
    """
    a = require_symmetric(a, "eigensolver input")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    work = np.ascontiguousarray(a)
    v = np.eye(n)
    sweeps = _jacobi_core(work, v, JACOBI_OFF_TOL, JACOBI_MAX_SWEEPS)
    if sweeps < 0:
        raise JacobiError(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps (n={n})")
    w = np.diag(work).copy()
    order = np.argsort(w, kind="stable")
    return w[order], np.ascontiguousarray(v[:, order])


def inv_sqrt(s: np.ndarray, floor: float = INV_SQRT_FLOOR) -> np.ndarray:
    """Symmetric orthogonalization matrix S^{-1/2}.

    Eigenvalues below ``floor`` are dropped from the inverse (their subspace
    is projected out); if every eigenvalue is below the floor the overlap is
    unusable and an error is raised.
    """
    s = require_symmetric(s, "overlap")
    w, v = jacobi_eigh(s)
    if w[0] < -1e-10:
        raise ValueError(f"overlap has negative eigenvalue {w[0]:.3e}")
    keep = w >= floor
    if not np.any(keep):
        raise ValueError("all overlap eigenvalues below floor")
    vk = v[:, keep]
    x = (vk / np.sqrt(w[keep])) @ vk.T
    return 0.5 * (x + x.T)


def gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def transform(f: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Congruence transform X^T F X, re-symmetrized exactly."""
    f = np.asarray(f, dtype=float)
    x = np.asarray(x, dtype=float)
    if f.shape[0] != f.shape[1] or x.shape[0] != f.shape[0]:
        raise ValueError(f"cannot transform shapes {f.shape} by {x.shape}")
    m = x.T @ f @ x
    return 0.5 * (m + m.T)

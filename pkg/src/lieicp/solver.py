"""Closed-form absolute orientation from paired points (unit-quaternion method)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RigidTransform, as_points
from .eigen import jacobi_eigh

DEGENERACY_GAP = 1e-9


@dataclass(frozen=True)
class CrossCovariance:
    """``(1/n) sum (y_i - mu_y)(x_i - mu_x)^T`` and the two centroids."""

    matrix: np.ndarray
    centroid_x: np.ndarray
    centroid_y: np.ndarray


def _pair_arrays(X, Y, minimum=3):
    X = as_points(X)
    Y = as_points(Y)
    if X.shape != Y.shape:
        raise ValueError(f"length mismatch: {len(X)} vs {len(Y)} points")
    if len(X) < minimum:
        raise ValueError(f"need at least {minimum} correspondences, got {len(X)}")
    return X, Y


def cross_covariance(X, Y) -> CrossCovariance:
    X, Y = _pair_arrays(X, Y)
    mx = X.mean(axis=0)
    my = Y.mean(axis=0)
    S = (Y - my).T @ (X - mx) / len(X)
    return CrossCovariance(S, mx, my)


def swc_covariance(X, S, Y, omega: float) -> CrossCovariance:
    """Cross-covariance after substituting ``x_i -> x_i + omega s_i``.

    ``centroid_x`` is reported for the unsubstituted ``X``.
    """
    X, Y = _pair_arrays(X, Y, minimum=1)
    S = as_points(S)
    if S.shape != X.shape:
        raise ValueError(f"length mismatch: {len(S)} shape partners for {len(X)} pairs")
    n = len(X)
    mx = X.mean(axis=0)
    ms = S.mean(axis=0)
    my = Y.mean(axis=0)
    Xw = X + omega * S
    M = Y.T @ Xw / n - np.outer(my, mx + omega * ms)
    return CrossCovariance(M, mx, my)


def build_M(cc: CrossCovariance | np.ndarray) -> np.ndarray:
    """Symmetric 4x4 matrix whose top eigenvector is the optimal quaternion."""
    S = cc.matrix if isinstance(cc, CrossCovariance) else np.asarray(cc, dtype=np.float64)
    A = S - S.T
    tr = np.trace(S)
    M = np.empty((4, 4))
    M[0, 0] = tr
    M[0, 1:] = M[1:, 0] = (A[1, 2], A[2, 0], A[0, 1])
    M[1:, 1:] = S + S.T - tr * np.eye(3)
    return M


def principal_eigenvector_4(M):
    """Unit eigenvector of the largest eigenvalue, sign fixed so ``v0 >= 0``.

    Returns ``(v, eigenvalues)`` with eigenvalues descending.
    """
    w, V = jacobi_eigh(M)
    v = V[:, 0].copy()
    nz = np.flatnonzero(v)
    if len(nz) and v[nz[0]] < 0:
        v = -v
    return v / np.linalg.norm(v), w


def quaternion_to_rotation(v) -> np.ndarray:
    """Rotation matrix of a scalar-first unit quaternion."""
    v0, v1, v2, v3 = np.asarray(v, dtype=np.float64)
    if abs(v0 * v0 + v1 * v1 + v2 * v2 + v3 * v3 - 1.0) > 1e-10:
        raise ValueError("quaternion must have unit norm")
    return np.array([
        [1 - 2 * (v2 * v2 + v3 * v3), 2 * (v1 * v2 - v0 * v3), 2 * (v1 * v3 + v0 * v2)],
        [2 * (v1 * v2 + v0 * v3), 1 - 2 * (v1 * v1 + v3 * v3), 2 * (v2 * v3 - v0 * v1)],
        [2 * (v1 * v3 - v0 * v2), 2 * (v2 * v3 + v0 * v1), 1 - 2 * (v1 * v1 + v2 * v2)],
    ])


def horn_solve(X, Y, S=None, omega: float = 0.0, full_output: bool = False):
    """Rigid transform minimising ``mean |y_i - (R x_i + t)|^2``.

    With shape partners ``S`` the rotation comes from the substituted
    cross-covariance (see :func:`swc_covariance`); the translation is always
    ``mu_y - R mu_x``. With ``full_output`` also returns a dict holding the
    eigenvalues of M and a ``degenerate`` flag (top eigenvalue not simple).
    """
    X, Y = _pair_arrays(X, Y)
    cc = cross_covariance(X, Y) if S is None else swc_covariance(X, S, Y, omega)
    # M expects the source-by-target orientation; the stored matrix is target-by-source
    M = build_M(cc.matrix.T)
    v, w = principal_eigenvector_4(M)
    R = quaternion_to_rotation(v)
    t = cc.centroid_y - R @ cc.centroid_x
    T = RigidTransform(R, t, repair=True)
    if not full_output:
        return T
    scale = max(abs(w[0]), abs(w[-1]), np.finfo(float).tiny)
    degenerate = bool((w[0] - w[1]) <= DEGENERACY_GAP * scale)
    return T, {"eigenvalues": w, "degenerate": degenerate, "quaternion": v}

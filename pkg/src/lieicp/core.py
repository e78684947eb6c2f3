"""Point clouds, rigid transforms and registration error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-12


def as_points(points) -> np.ndarray:
    """Coerce anything array-like into a float64 ``(n, 3)`` array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array of points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


@dataclass(frozen=True)
class PointCloud:
    """Ordered 3D points; row ``i`` keeps index ``i`` across every operation."""

    points: np.ndarray
    label: str = ""

    def __post_init__(self):
        pts = as_points(self.points)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __getitem__(self, idx):
        return self.points[idx]

    def take(self, indices, label: str | None = None) -> "PointCloud":
        return PointCloud(self.points[np.asarray(indices, dtype=int)],
                          self.label if label is None else label)


def _check_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> None:
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ValueError("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol:
        raise ValueError("rotation is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("rotation must have determinant +1")


def orthonormalize(R) -> np.ndarray:
    """Gram-Schmidt on the columns of ``R``; removes drift from long products."""
    R = np.asarray(R, dtype=np.float64)
    c0 = R[:, 0] / np.linalg.norm(R[:, 0])
    c1 = R[:, 1] - (c0 @ R[:, 1]) * c0
    c1 /= np.linalg.norm(c1)
    c2 = np.cross(c0, c1)
    return np.column_stack([c0, c1, c2])


@dataclass(frozen=True)
class RigidTransform:
    """``x -> R @ x + t`` with ``R`` in SO(3).

    Construction validates orthonormality to 1e-12 per entry. Pass
    ``repair=True`` to Gram-Schmidt the rotation first.
    """

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    repair: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        R = np.array(self.R, dtype=np.float64)
        t = np.array(self.t, dtype=np.float64).reshape(3)
        if self.repair:
            R = orthonormalize(R)
        _check_rotation(R)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    def __call__(self, points) -> np.ndarray:
        return as_points(points) @ self.R.T + self.t

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def inverse(self) -> "RigidTransform":
        return invert(self)


def apply_transform(cloud: PointCloud, T: RigidTransform) -> PointCloud:
    return PointCloud(cloud.points @ T.R.T + T.t, cloud.label)


def compose(T1: RigidTransform, T2: RigidTransform) -> RigidTransform:
    """Transform applying ``T2`` first, then ``T1``."""
    return RigidTransform(T1.R @ T2.R, T1.R @ T2.t + T1.t, repair=True)


def invert(T: RigidTransform) -> RigidTransform:
    return RigidTransform(T.R.T, -(T.R.T @ T.t))


def _paired(X, Y):
    X = as_points(X)
    Y = as_points(Y)
    if X.shape != Y.shape:
        raise ValueError(f"correspondence length mismatch: {len(X)} source vs {len(Y)} target points")
    if len(X) == 0:
        raise ValueError("correspondence set is empty")
    return X, Y


def mse(X, Y, T: RigidTransform) -> float:
    """Mean of ``||y_i - (R x_i + t)||^2`` over index-aligned pairs."""
    X, Y = _paired(X, Y)
    r = Y - (X @ T.R.T + T.t)
    return float(np.mean(np.sum(r * r, axis=1)))


def mrms(X, Y, T: RigidTransform) -> float:
    return float(np.sqrt(mse(X, Y, T)))


def rotation_geodesic_error(R, R_gt) -> float:
    """Angle in radians of the relative rotation ``R^T R_gt``.

    Equal to ``arccos((trace - 1) / 2)``, evaluated as ``atan2(sin, cos)`` so
    that angles near zero keep full precision (``arccos`` near 1 cannot
    resolve anything below about 1.5e-8 rad).
    """
    R = np.asarray(R, dtype=np.float64)
    R_gt = np.asarray(R_gt, dtype=np.float64)
    _check_rotation(R, 1e-9)
    _check_rotation(R_gt, 1e-9)
    D = R.T @ R_gt
    c = (np.trace(D) - 1.0) / 2.0
    axial = np.array([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]]) / 2.0
    return float(math.atan2(np.linalg.norm(axial), np.clip(c, -1.0, 1.0)))


def axis_angle_rotation(axis, angle: float) -> np.ndarray:
    """Right-handed rotation of ``angle`` radians about ``axis`` (Rodrigues)."""
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)

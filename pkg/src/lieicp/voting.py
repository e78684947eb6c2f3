"""Second-order orientation tensors by two-stage tensor voting.

Stage one sums Gaussian-weighted outer products of the unit directions to the
k% nearest neighbours (the isotropic field ``T``). Its eigenvectors give a
local frame whose third axis approximates the surface normal. Stage two casts
"arc" votes: each neighbour ``s`` is joined to ``p`` by the circle tangent to
the local tangent plane at ``p``; the unit tangent of that circle at ``s``
is the vote direction and the arc length drives the weight (the anisotropic
field ``S``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PointCloud, as_points
from .eigen import jacobi_eigh
from .spatial import neighborhoods

DEFAULT_PHI_MAX = math.pi / 4


@dataclass(frozen=True)
class EigenFrame:
    """Descending eigenvalues and a right-handed orthonormal eigenvector frame."""

    eigenvalues: np.ndarray
    vectors: np.ndarray  # columns e1, e2, e3

    @property
    def e1(self):
        return self.vectors[:, 0]

    @property
    def e2(self):
        return self.vectors[:, 1]

    @property
    def e3(self):
        return self.vectors[:, 2]


@dataclass(frozen=True)
class ArcGeometry:
    phi: float
    arc_length: float
    xi: np.ndarray


def isotropic_tensor(p, neighbors, sigma: float) -> np.ndarray:
    """``sum_s exp(-|s - p|^2 / sigma^2) * v v^T`` with ``v`` the unit vector p->s."""
    p = np.asarray(p, dtype=np.float64)
    V = as_points(neighbors) - p
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d2 = np.sum(V * V, axis=1)
    if np.any(d2 == 0.0):
        raise ValueError("a neighbour coincides with the centre point")
    U = V / np.sqrt(d2)[:, None]
    w = np.exp(-d2 / (sigma * sigma))
    T = (U * w[:, None]).T @ U
    return 0.5 * (T + T.T)


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    return -v if v[np.argmax(np.abs(v))] < 0 else v


def eigen_frame(T) -> EigenFrame:
    """Jacobi eigendecomposition with a deterministic sign convention.

    Each eigenvector's largest-magnitude component is made non-negative,
    then ``e3`` is flipped if needed so the frame is right-handed.
    """
    w, V = jacobi_eigh(T)
    V = np.column_stack([_canonical_sign(V[:, i]) for i in range(3)])
    if np.linalg.det(V) < 0:
        V[:, 2] = -V[:, 2]
    return EigenFrame(w, V)


def arc_geometry(p, s, frame: EigenFrame) -> ArcGeometry:
    """Elevation angle, arc length and arc tangent at ``s`` of the osculating circle.

    The circle lies in the plane through ``p`` spanned by the normal ``e3`` and
    the horizontal direction of ``s - p``; it is tangent to the ``e1, e2`` plane
    at ``p`` and passes through ``s``. For elevation ``phi`` its radius is
    ``|v| / (2 sin phi)`` and it subtends ``2 phi``, so the arc length is
    ``phi |v| / sin phi`` and the tangent at ``s`` is tilted ``2 phi`` out of
    the plane.
    """
    v = np.asarray(s, dtype=np.float64) - np.asarray(p, dtype=np.float64)
    r = math.sqrt(float(v @ v))
    if r == 0.0:
        raise ValueError("arc geometry is undefined for s == p")
    z = frame.e3
    h = float(v @ z)
    horiz = v - h * z
    ell = math.sqrt(float(horiz @ horiz))
    if ell == 0.0:
        # directly above p: the cutoff (phi = 90 deg) zeroes this vote anyway
        return ArcGeometry(math.pi / 2, r * math.pi / 2, z.copy())
    phi = math.atan2(abs(h), ell)
    u = horiz / ell
    arc = r if phi == 0.0 else phi * r / math.sin(phi)
    sgn = 1.0 if h >= 0 else -1.0
    xi = math.cos(2 * phi) * u + sgn * math.sin(2 * phi) * z
    return ArcGeometry(phi, arc, xi / np.linalg.norm(xi))


def anisotropic_weight(arc: ArcGeometry, sigma: float, phi_max: float = DEFAULT_PHI_MAX) -> float:
    """``exp(-d_e / sigma^2)`` inside the elevation cutoff, zero outside.

    The arc length enters to the first power.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if math.tan(arc.phi) > math.tan(phi_max):
        return 0.0
    return math.exp(-arc.arc_length / (sigma * sigma))


def _arc_votes(p, S, z):
    """Vectorised ``arc_geometry`` for many neighbours sharing one frame."""
    V = S - p
    r = np.sqrt(np.sum(V * V, axis=1))
    h = V @ z
    horiz = V - h[:, None] * z
    ell = np.sqrt(np.sum(horiz * horiz, axis=1))
    flat = ell == 0.0
    phi = np.where(flat, math.pi / 2, np.arctan2(np.abs(h), np.where(flat, 1.0, ell)))
    with np.errstate(invalid="ignore", divide="ignore"):
        arc = np.where(phi == 0.0, r, phi * r / np.sin(phi))
        u = horiz / np.where(flat, 1.0, ell)[:, None]
    sgn = np.where(h >= 0, 1.0, -1.0)
    xi = np.cos(2 * phi)[:, None] * u + (sgn * np.sin(2 * phi))[:, None] * z
    xi[flat] = z
    xi /= np.linalg.norm(xi, axis=1)[:, None]
    return phi, arc, xi


def _voters(lists) -> list[list[int]]:
    voters = [[] for _ in lists]
    for nl in lists:
        for j in nl.neighbor_indices:
            voters[j].append(nl.center_index)
    return voters


def anisotropic_tensor(p_index: int, cloud, lists, frames, phi_max: float = DEFAULT_PHI_MAX,
                       reverse_votes: bool = False, voters=None) -> np.ndarray:
    """Arc-vote tensor ``S(p) = sum g(p, s) xi_s xi_s^T``.

    By default the sum runs over the neighbours of ``p`` using ``p``'s frame
    and scale. With ``reverse_votes`` it runs over every point ``s`` having
    ``p`` in its own list, each voting with its own frame and scale.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else as_points(cloud)
    tan_max = math.tan(phi_max)
    S = np.zeros((3, 3))
    if not reverse_votes:
        nl = lists[p_index]
        p = pts[p_index]
        phi, arc, xi = _arc_votes(p, pts[nl.neighbor_indices], frames[p_index].e3)
        w = np.where(np.tan(phi) <= tan_max, np.exp(-arc / (nl.sigma * nl.sigma)), 0.0)
        S = (xi * w[:, None]).T @ xi
    else:
        target = pts[p_index]
        if voters is None:
            voters = _voters(lists)
        for c in voters[p_index]:
            nl = lists[c]
            arc = arc_geometry(pts[nl.center_index], target, frames[nl.center_index])
            w = anisotropic_weight(arc, nl.sigma, phi_max)
            if w:
                S += w * np.outer(arc.xi, arc.xi)
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class TensorField:
    """Per-point isotropic and anisotropic tensors of one cloud."""

    isotropic: np.ndarray  # (n, 3, 3)
    anisotropic: np.ndarray  # (n, 3, 3)
    frames: list
    lists: list


def tensor_field_full(cloud, k_percent: float, phi_max: float = DEFAULT_PHI_MAX,
                      reverse_votes: bool = False, normalize_trace: bool = False) -> TensorField:
    pts = cloud.points if isinstance(cloud, PointCloud) else as_points(cloud)
    if len(pts) < 3:
        raise ValueError("tensor voting needs at least three points")
    lists = neighborhoods(pts, k_percent)
    iso = np.empty((len(pts), 3, 3))
    frames = []
    for i, nl in enumerate(lists):
        iso[i] = isotropic_tensor(pts[i], pts[nl.neighbor_indices], nl.sigma)
        frames.append(eigen_frame(iso[i]))
    if reverse_votes:
        voters = _voters(lists)
        aniso = np.stack([anisotropic_tensor(i, pts, lists, frames, phi_max, True, voters)
                          for i in range(len(pts))])
    else:
        aniso = np.stack([anisotropic_tensor(i, pts, lists, frames, phi_max)
                          for i in range(len(pts))])
    if normalize_trace:
        tr = np.trace(aniso, axis1=1, axis2=2)
        aniso = aniso / np.where(tr > 0, tr, 1.0)[:, None, None]
    return TensorField(iso, aniso, frames, lists)


def tensor_field(cloud, k_percent: float, phi_max: float = DEFAULT_PHI_MAX, **options) -> np.ndarray:
    """Anisotropic tensor ``S(p)`` for every point, shape ``(n, 3, 3)``."""
    return tensor_field_full(cloud, k_percent, phi_max, **options).anisotropic

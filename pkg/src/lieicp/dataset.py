"""Point-cloud I/O and the benchmark scenarios (rotated, hole-punched, noisy)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import PointCloud, RigidTransform, apply_transform, as_points, axis_angle_rotation, invert

FORMATS = ("ply-ascii", "xyz")
_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


class CloudParseError(ValueError):
    """Malformed point-cloud file; ``line`` is 1-based."""

    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = str(path)
        self.line = line


# -- file I/O ---------------------------------------------------------------


def _guess_format(path: Path) -> str:
    return "ply-ascii" if path.suffix.lower() == ".ply" else "xyz"


def _floats(tokens, path, lineno, count):
    if len(tokens) < count:
        raise CloudParseError(path, lineno, f"expected {count} numbers, got {len(tokens)}")
    try:
        return [float(t) for t in tokens[:count]]
    except ValueError as e:
        raise CloudParseError(path, lineno, str(e)) from None


def _load_xyz(path, lines):
    pts = []
    for lineno, raw in enumerate(lines, 1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        pts.append(_floats(s.split(), path, lineno, 3))
    return pts


def _load_ply(path, lines):
    if not lines or lines[0].strip() != "ply":
        raise CloudParseError(path, 1, "missing 'ply' magic")
    n_vertex = None
    props: list[str] = []
    element = None
    skip_before = 0  # rows of elements declared ahead of 'vertex'
    counts: dict[str, int] = {}
    end = None
    for lineno, raw in enumerate(lines[1:], 2):
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] != "ascii":
                raise CloudParseError(path, lineno, "only ascii PLY is supported")
        elif tok[0] == "element":
            if len(tok) != 3:
                raise CloudParseError(path, lineno, "malformed element line")
            element = tok[1]
            try:
                counts[element] = int(tok[2])
            except ValueError:
                raise CloudParseError(path, lineno, f"bad element count {tok[2]!r}") from None
            if element == "vertex":
                n_vertex = counts[element]
            elif n_vertex is None:
                skip_before += counts[element]
        elif tok[0] == "property":
            if element == "vertex":
                if tok[1] == "list":
                    raise CloudParseError(path, lineno, "list properties on vertices are not supported")
                props.append(tok[-1])
        elif tok[0] == "end_header":
            end = lineno
            break
        else:
            raise CloudParseError(path, lineno, f"unexpected header keyword {tok[0]!r}")
    if end is None:
        raise CloudParseError(path, len(lines), "missing end_header")
    if n_vertex is None:
        raise CloudParseError(path, end, "no vertex element")
    try:
        cols = [props.index(a) for a in "xyz"]
    except ValueError:
        raise CloudParseError(path, end, "vertex element lacks x, y or z") from None
    pts = []
    lineno = end
    body = iter(enumerate(lines[end:], end + 1))
    skipped = 0
    for lineno, raw in body:
        if len(pts) == n_vertex:
            break
        tok = raw.split()
        if not tok:
            continue
        if skipped < skip_before:
            skipped += 1
            continue
        vals = _floats(tok, path, lineno, len(props))
        pts.append([vals[c] for c in cols])
    if len(pts) != n_vertex:
        raise CloudParseError(path, lineno + 1, f"expected {n_vertex} vertices, found {len(pts)}")
    return pts


def load_cloud(path, format: str | None = None, label: str | None = None) -> PointCloud:
    """Read vertex positions (file order) from an ascii PLY or an xyz text file."""
    path = Path(path)
    fmt = format or _guess_format(path)
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    lines = path.read_text(encoding="utf-8").splitlines()
    pts = _load_ply(path, lines) if fmt == "ply-ascii" else _load_xyz(path, lines)
    return PointCloud(np.array(pts, dtype=np.float64).reshape(-1, 3), label or path.stem)


def save_cloud(cloud, path, format: str | None = None) -> None:
    """Write positions with 17 significant digits (exact float64 round trip)."""
    path = Path(path)
    pts = as_points(cloud.points if isinstance(cloud, PointCloud) else cloud)
    fmt = format or _guess_format(path)
    rows = [" ".join(f"{v:.17g}" for v in p) for p in pts]
    if fmt == "ply-ascii":
        head = ["ply", "format ascii 1.0", f"element vertex {len(pts)}",
                "property double x", "property double y", "property double z", "end_header"]
        rows = head + rows
    elif fmt != "xyz":
        raise ValueError(f"unknown format {fmt!r}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


# -- scenarios --------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """Source/target pair with the transform that maps source onto target.

    ``correspondence`` is an ``(m, 2)`` array of ``(source, target)`` indices.
    """

    source: PointCloud
    target: PointCloud
    ground_truth: RigidTransform
    correspondence: np.ndarray | None = None
    descriptor_tag: str = "original"

    def __post_init__(self):
        if self.correspondence is not None:
            c = np.asarray(self.correspondence, dtype=np.intp).reshape(-1, 2)
            if len(c) and (c.min() < 0 or c[:, 0].max() >= len(self.source)
                           or c[:, 1].max() >= len(self.target)):
                raise ValueError("correspondence index out of range")
            c.setflags(write=False)
            object.__setattr__(self, "correspondence", c)

    def gt_pairs(self):
        """Source and target points of the known correspondences."""
        c = self.correspondence
        return self.source.points[c[:, 0]], self.target.points[c[:, 1]]


@dataclass(frozen=True)
class NoiseSpec:
    nu: float
    seed: int = 0

    def __post_init__(self):
        if not self.nu >= 0:
            raise ValueError("nu must be non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


def subsample_step(cloud: PointCloud, step: int) -> PointCloud:
    if step < 1:
        raise ValueError("step must be at least 1")
    return cloud.take(np.arange(0, len(cloud), step))


def axis_vector(axis) -> np.ndarray:
    """Unit axis from ``'x' | 'y' | 'z'`` or three numbers."""
    if isinstance(axis, str):
        if axis.lower() in _AXES:
            return np.array(_AXES[axis.lower()])
        axis = [float(v) for v in axis.split(",")]
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    n = np.linalg.norm(a)
    if n == 0:
        raise ValueError("axis must be nonzero")
    return a / n


def make_rotated_scenario(cloud: PointCloud, angle_deg: float, axis="y") -> Scenario:
    """Source is the cloud rotated by ``angle_deg`` (right-hand rule); target is the cloud."""
    if len(cloud) == 0:
        raise ValueError("cloud is empty")
    rot = RigidTransform(axis_angle_rotation(axis_vector(axis), math.radians(angle_deg)), np.zeros(3))
    src = apply_transform(cloud, rot)
    n = len(cloud)
    return Scenario(PointCloud(src.points, "source"), PointCloud(cloud.points, "target"),
                    invert(rot), np.c_[np.arange(n), np.arange(n)], "original")


def default_hole_center(cloud: PointCloud) -> np.ndarray:
    """The cloud point nearest the centroid (smallest index on ties)."""
    p = cloud.points
    d = np.sum((p - p.mean(axis=0)) ** 2, axis=1)
    return p[int(np.argmin(d))].copy()


def punch_hole(scn: Scenario, center=None, radius: float = 0.03) -> Scenario:
    """Drop every target point within ``radius`` of ``center`` (inclusive)."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    tgt = scn.target.points
    c = default_hole_center(scn.target) if center is None else np.asarray(center, dtype=np.float64)
    diff = tgt - c
    keep = np.sqrt(np.sum(diff * diff, axis=1)) > radius
    if not keep.any():
        raise ValueError("hole removes every target point")
    new_index = np.full(len(tgt), -1, dtype=np.intp)
    new_index[keep] = np.arange(int(keep.sum()))
    corr = None
    if scn.correspondence is not None:
        c_old = scn.correspondence
        alive = keep[c_old[:, 1]]
        corr = np.c_[c_old[alive, 0], new_index[c_old[alive, 1]]]
    return replace(scn, target=scn.target.take(np.flatnonzero(keep)), correspondence=corr,
                   descriptor_tag="hole")


def _stream(seed: int, which: int) -> np.random.Generator:
    # one counter-based stream per cloud, keyed by (seed, cloud id)
    return np.random.Generator(np.random.Philox(key=np.array([seed, which], dtype=np.uint64)))


def _box_muller(rng: np.random.Generator, count: int) -> np.ndarray:
    half = (count + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1]
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * half)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[:count]


def noise_vectors(n: int, nu: float, seed: int, which: int = 0) -> np.ndarray:
    """``nu * theta * u`` per point: Gaussian magnitude, uniform direction."""
    z = _box_muller(_stream(seed, which), 4 * n).reshape(n, 4)
    theta, g = z[:, 0], z[:, 1:]
    norm = np.sqrt(np.sum(g * g, axis=1))
    norm[norm == 0] = 1.0
    return nu * theta[:, None] * (g / norm[:, None])


def bbox_diagonal(cloud: PointCloud) -> float:
    p = cloud.points
    return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))


def add_noise(scn: Scenario, spec: NoiseSpec) -> Scenario:
    """Perturb both clouds independently; indices and correspondence are kept."""
    src = scn.source.points + noise_vectors(len(scn.source), spec.nu, int(spec.seed), 0)
    tgt = scn.target.points + noise_vectors(len(scn.target), spec.nu, int(spec.seed), 1)
    return replace(scn, source=PointCloud(src, scn.source.label), target=PointCloud(tgt, scn.target.label),
                   descriptor_tag="noise")


def noise_from_percent(scn: Scenario, percent: float, seed: int, absolute: bool = False) -> NoiseSpec:
    nu = percent if absolute else percent * bbox_diagonal(scn.target) / 100.0
    return NoiseSpec(nu, seed)


# -- manifests --------------------------------------------------------------


def write_manifest(scn: Scenario, out_dir, stem: str | None = None, fmt: str = "xyz",
                   extra: dict | None = None) -> Path:
    """Write ``<stem>_source``/``<stem>_target`` clouds and ``<stem>.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or scn.descriptor_tag
    ext = ".ply" if fmt == "ply-ascii" else ".xyz"
    src_name, tgt_name = f"{stem}_source{ext}", f"{stem}_target{ext}"
    save_cloud(scn.source, out / src_name, fmt)
    save_cloud(scn.target, out / tgt_name, fmt)
    doc = {
        "source_file": src_name,
        "target_file": tgt_name,
        "ground_truth": {"R": scn.ground_truth.R.reshape(9).tolist(), "t": (scn.ground_truth.t + 0.0).tolist()},
        "correspondence": None if scn.correspondence is None else scn.correspondence.tolist(),
        "tag": scn.descriptor_tag,
    }
    if extra:
        doc.update(extra)
    path = out / f"{stem}.json"
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return path


def read_manifest(path) -> tuple[Scenario, dict]:
    """Load a manifest; returns the scenario and the raw document.

    Cloud paths are resolved relative to the manifest's directory.
    """
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    for key in ("source_file", "target_file", "ground_truth"):
        if key not in doc:
            raise ValueError(f"{path}: manifest lacks {key!r}")
    base = path.parent
    src = load_cloud(base / doc["source_file"], label="source")
    tgt = load_cloud(base / doc["target_file"], label="target")
    gt = doc["ground_truth"]
    T = RigidTransform(np.asarray(gt["R"], dtype=np.float64).reshape(3, 3),
                       np.asarray(gt["t"], dtype=np.float64), repair=True)
    corr = doc.get("correspondence")
    corr = None if corr is None else np.asarray(corr, dtype=np.intp).reshape(-1, 2)
    return Scenario(src, tgt, T, corr, doc.get("tag", "original")), doc

"""Discretisations of S^1 and S^2, manifold-valued fields, and field files."""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import SphericalVoronoi

from .errors import DomainError
from .geometry import SpherePoint, TargetManifold, _coords

ON_MANIFOLD_TOL = 1e-9
REPROJECT_TOL = 1e-6


class FieldFormatError(DomainError):
    """A field file is malformed or its values are too far off the target."""


@dataclass(frozen=True, eq=False)
class SphereMesh:
    """Quadrature nodes on S^n.

    Attributes
    ----------
    n : int
        Domain dimension (1 or 2).
    nodes : ndarray, shape (N, n+1)
        Unit vectors, in a deterministic order.
    weights : ndarray, shape (N,)
        Quadrature weights; they sum to |S^n|.
    resolution : int
        Node count for n = 1, icosphere subdivision level for n = 2.
    faces : ndarray or None
        Outward-oriented triangles (n = 2 only).
    """

    n: int
    nodes: np.ndarray
    weights: np.ndarray
    resolution: int
    faces: np.ndarray | None = dc_field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def __len__(self):
        return self.size

    @cached_property
    def adjacency(self) -> list[np.ndarray]:
        """Neighbour indices of every node (ring neighbours for n = 1)."""
        N = self.size
        if self.n == 1:
            return [np.array([(i - 1) % N, (i + 1) % N]) for i in range(N)]
        nbrs: list[set] = [set() for _ in range(N)]
        for a, b, c in self.faces:
            nbrs[a] |= {b, c}
            nbrs[b] |= {a, c}
            nbrs[c] |= {a, b}
        return [np.array(sorted(s)) for s in nbrs]

    @cached_property
    def spacing(self) -> float:
        """Largest chordal distance between neighbouring nodes."""
        if self.n == 1:
            return float(2.0 * np.sin(np.pi / self.size))
        e = self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        return float(np.max(np.linalg.norm(self.nodes[e[:, 0]] - self.nodes[e[:, 1]], axis=1)))

    @cached_property
    def angles(self) -> np.ndarray:
        """Node angles in [0, 2 pi) for n = 1."""
        if self.n != 1:
            raise DomainError("angles are only defined on S^1 meshes")
        return 2.0 * np.pi * np.arange(self.size) / self.size

    def index_of(self, point) -> int:
        """Index of the node closest to ``point``."""
        c = _coords(point)
        return int(np.argmin(np.linalg.norm(self.nodes - c, axis=1)))


def _ring(N: int) -> SphereMesh:
    theta = 2.0 * np.pi * np.arange(N) / N
    nodes = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    weights = np.full(N, 2.0 * np.pi / N)
    return SphereMesh(1, nodes, weights, N)


def _icosphere(level: int) -> SphereMesh:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    pts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = pts[a] + pts[b]
                pts.append(m / np.linalg.norm(m))
                cache[key] = len(pts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    nodes = np.array(pts)
    faces = np.array(faces, dtype=np.int64)
    # make every face outward oriented
    a, b, c = nodes[faces[:, 0]], nodes[faces[:, 1]], nodes[faces[:, 2]]
    flip = np.einsum("ij,ij->i", np.cross(b - a, c - a), a + b + c) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    sv = SphericalVoronoi(nodes, radius=1.0, center=np.zeros(3))
    weights = sv.calculate_areas()
    return SphereMesh(2, nodes, weights, level, faces)


def build_mesh(n: int, resolution: int) -> SphereMesh:
    """Build a mesh of S^n.

    n = 1 gives ``resolution`` equally spaced nodes at angles 2 pi k / N with
    trapezoidal weights; n = 2 gives an icosphere subdivided ``resolution``
    times with spherical Voronoi weights.
    """
    if n == 1:
        if int(resolution) != resolution or resolution < 8:
            raise DomainError("S^1 meshes need an integer resolution >= 8")
        return _ring(int(resolution))
    if n == 2:
        if int(resolution) != resolution or resolution < 1:
            raise DomainError("icosphere subdivision level must be an integer >= 1")
        return _icosphere(int(resolution))
    raise DomainError(f"unsupported domain dimension n={n}; use 1 or 2")


def ball_indices(mesh: SphereMesh, center, rho: float) -> np.ndarray:
    """Sorted indices of nodes at chordal distance < rho from ``center``."""
    if not 0.0 < rho < 2.0:
        raise DomainError(f"ball radius must lie in (0, 2), got {rho}")
    d = np.linalg.norm(mesh.nodes - _coords(center), axis=1)
    return np.flatnonzero(d < rho)


def complement(mesh: SphereMesh, idx) -> np.ndarray:
    mask = np.ones(mesh.size, dtype=bool)
    mask[np.asarray(idx, dtype=np.int64)] = False
    return np.flatnonzero(mask)


@dataclass(frozen=True, eq=False)
class Field:
    """Values of a map on the nodes of a mesh.

    With a target manifold every row must lie on it; ``target=None`` gives an
    unconstrained real- or vector-valued field (used for cut-off functions).
    """

    mesh: SphereMesh
    values: np.ndarray
    target: TargetManifold | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.mesh.size:
            raise DomainError(f"field has {v.shape[0]} values for {self.mesh.size} nodes")
        if self.target is not None:
            if v.shape[1] != self.target.ambient_dim:
                raise DomainError("field values do not match the target dimension")
            dev = self.target.distance(v)
            if np.any(dev > ON_MANIFOLD_TOL):
                i = int(np.argmax(dev))
                raise DomainError(f"value at node {i} is {dev[i]:.3g} off the target")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def with_values(self, values) -> "Field":
        return Field(self.mesh, values, self.target)


def constant_field(mesh: SphereMesh, value, target: TargetManifold | None = None) -> Field:
    value = np.asarray(value, dtype=float)
    if target is None:
        target = TargetManifold(value.size)
    return Field(mesh, np.tile(value / np.linalg.norm(value), (mesh.size, 1)), target)


def power_map(mesh: SphereMesh, k: int) -> Field:
    """The map theta -> k theta from S^1 to S^1 (identity for k = 1)."""
    if mesh.n != 1:
        raise DomainError("power_map is defined on S^1 meshes")
    th = k * mesh.angles
    return Field(mesh, np.stack([np.cos(th), np.sin(th)], axis=1), TargetManifold(2))


def identity_field(mesh: SphereMesh) -> Field:
    """The identity map S^n -> S^n."""
    return Field(mesh, mesh.nodes.copy(), TargetManifold(mesh.n + 1))


def _locate_faces(mesh: SphereMesh, q: np.ndarray):
    """Containing face and gnomonic barycentric weights for points on S^2."""
    a, b, c = (mesh.nodes[mesh.faces[:, k]] for k in range(3))
    wa = q @ np.cross(b, c).T
    wb = q @ np.cross(c, a).T
    wc = q @ np.cross(a, b).T
    slack = np.minimum(np.minimum(wa, wb), wc)
    face = np.argmax(slack, axis=1)
    rows = np.arange(q.shape[0])
    w = np.stack([wa[rows, face], wb[rows, face], wc[rows, face]], axis=1)
    w = np.clip(w, 0.0, None)
    w /= w.sum(axis=1, keepdims=True)
    return mesh.faces[face], w


def sample(field: Field, points) -> np.ndarray:
    """Piecewise-linear interpolation of field values at arbitrary points of S^n.

    On S^1 the interpolation is periodic-linear in the angle; on S^2 it is
    barycentric on the containing icosphere face.  The result is *not*
    re-projected onto the target.
    """
    mesh = field.mesh
    q = np.atleast_2d(np.asarray(points, dtype=float))
    U = field.values
    if mesh.n == 1:
        N = mesh.size
        phi = np.mod(np.arctan2(q[:, 1], q[:, 0]), 2.0 * np.pi)
        pos = phi * N / (2.0 * np.pi)
        i0 = np.floor(pos).astype(np.int64)
        frac = (pos - i0)[:, None]
        i0 %= N
        i1 = (i0 + 1) % N
        return (1.0 - frac) * U[i0] + frac * U[i1]
    idx, w = _locate_faces(mesh, q)
    return np.einsum("qk,qkm->qm", w, U[idx])


def save_field(field: Field, path) -> None:
    doc = {
        "n": field.mesh.n,
        "resolution": field.mesh.resolution,
        "target_dim": field.dim,
        "values": field.values.tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_field(path) -> Field:
    """Read a field file, re-projecting values that are within 1e-6 of the target."""
    try:
        doc = json.loads(Path(path).read_text())
        n, res, M = int(doc["n"]), int(doc["resolution"]), int(doc["target_dim"])
        values = np.asarray(doc["values"], dtype=float)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise FieldFormatError(f"cannot read field file {path}: {exc}") from exc
    mesh = build_mesh(n, res)
    if values.shape != (mesh.size, M):
        raise FieldFormatError(
            f"field file {path}: values have shape {values.shape}, expected {(mesh.size, M)}"
        )
    target = TargetManifold(M)
    dev = target.distance(values)
    if np.any(~np.isfinite(dev)) or np.any(dev >= REPROJECT_TOL):
        i = int(np.nanargmax(np.where(np.isfinite(dev), dev, np.inf)))
        raise FieldFormatError(f"field file {path}: value at node {i} is off the target")
    values = values / np.linalg.norm(values, axis=1, keepdims=True)
    return Field(mesh, values, target)


__all__ = [
    "Field",
    "FieldFormatError",
    "SphereMesh",
    "SpherePoint",
    "ball_indices",
    "build_mesh",
    "complement",
    "constant_field",
    "identity_field",
    "load_field",
    "power_map",
    "sample",
    "save_field",
]

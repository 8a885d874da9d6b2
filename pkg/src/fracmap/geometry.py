"""Stereographic charts, chordal distances and projections onto round spheres.

Conventions: the domain sphere S^n sits in R^{n+1} with its polar axis along
the *last* coordinate.  The north pole is N = (0, ..., 0, 1) and the south
pole S = (0, ..., 0, -1).  The inverse stereographic projection is

    tau(y) = (2 y / (|y|^2 + 1), (|y|^2 - 1) / (|y|^2 + 1)),

so tau(0) = S and tau(y) -> N as |y| -> infinity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PoleError, TubularViolation

POLE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SpherePoint:
    """A unit vector in R^{n+1}.  Normalised on construction."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).reshape(-1)
        nrm = np.linalg.norm(c)
        if c.size < 2 or not np.isfinite(nrm) or nrm == 0.0:
            raise DomainError(f"cannot normalise {c!r} onto a sphere")
        c = c / nrm
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.size - 1

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, SpherePoint):
            return NotImplemented
        return self.coords.shape == other.coords.shape and bool(np.all(self.coords == other.coords))

    def __hash__(self):
        return hash(self.coords.tobytes())

    def __repr__(self):
        return f"SpherePoint({self.coords.tolist()})"


def north_pole(n: int) -> SpherePoint:
    c = np.zeros(n + 1)
    c[-1] = 1.0
    return SpherePoint(c)


def south_pole(n: int) -> SpherePoint:
    c = np.zeros(n + 1)
    c[-1] = -1.0
    return SpherePoint(c)


def _coords(x) -> np.ndarray:
    return np.asarray(x.coords if isinstance(x, SpherePoint) else x, dtype=float)


def stereo_lift_array(y) -> np.ndarray:
    """Vectorised inverse stereographic projection of chart points of shape (K, n).

    Infinite entries map to the north pole.
    """
    y = np.asarray(y, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        sq = np.sum(y * y, axis=-1, keepdims=True)
        out = np.concatenate([2.0 * y / (sq + 1.0), (sq - 1.0) / (sq + 1.0)], axis=-1)
    at_inf = ~np.isfinite(sq[..., 0])
    if np.any(at_inf):
        out[at_inf] = 0.0
        out[at_inf, -1] = 1.0
    return out


def stereo_lift(r) -> SpherePoint:
    """Inverse stereographic projection of a finite chart point.

    For n = 1 pass a real number; for n >= 2 a point of R^n.
    """
    y = np.atleast_1d(np.asarray(r, dtype=float))
    if y.ndim != 1 or not np.all(np.isfinite(y)):
        raise DomainError(f"stereo_lift needs a finite chart point, got {r!r}")
    return SpherePoint(stereo_lift_array(y[None, :])[0])


def stereo_project_array(x) -> np.ndarray:
    """Vectorised stereographic projection from N; returns shape ``(..., n)``.

    Points at the north pole map to ``inf``.
    """
    x = np.asarray(x, dtype=float)
    denom = 1.0 - x[..., -1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        y = x[..., :-1] / denom
    pole = np.linalg.norm(x - np.eye(x.shape[-1])[-1], axis=-1) <= POLE_TOL
    if np.any(pole):
        y[pole] = np.inf
    return y


def stereo_project(x):
    """Stereographic projection of a point of S^n away from N.

    Returns a float for n = 1 and an array of shape (n,) otherwise.
    """
    c = _coords(x)
    if np.linalg.norm(c - north_pole(c.size - 1).coords) <= POLE_TOL:
        raise PoleError("stereographic projection undefined at the north pole")
    y = c[:-1] / (1.0 - c[-1])
    return float(y[0]) if y.size == 1 else y


def chordal_distance(x, y) -> float:
    return float(np.linalg.norm(_coords(x) - _coords(y)))


def pairwise_chordal(nodes_a: np.ndarray, nodes_b: np.ndarray) -> np.ndarray:
    """Chordal distance matrix between two stacks of unit vectors."""
    diff = nodes_a[:, None, :] - nodes_b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def rotation_to_south(center) -> np.ndarray:
    """Orthogonal matrix Q with Q @ center = S (proper rotation).

    Charts centred at an arbitrary point are obtained by rotating that point
    to the south pole first.
    """
    c = _coords(center)
    c = c / np.linalg.norm(c)
    dim = c.size
    s = np.zeros(dim)
    s[-1] = -1.0
    cos = float(c @ s)
    if cos > 1.0 - 1e-15:
        return np.eye(dim)
    if cos < -1.0 + 1e-15:
        # center = N: a half turn in the plane of the first and last axes
        q = np.eye(dim)
        q[0, 0] = q[-1, -1] = -1.0
        return q
    # rotation in the plane spanned by c and s
    v = s - cos * c
    v /= np.linalg.norm(v)
    sin = np.sqrt(max(0.0, 1.0 - cos * cos))
    q = np.eye(dim) + sin * (np.outer(v, c) - np.outer(c, v)) + (cos - 1.0) * (
        np.outer(c, c) + np.outer(v, v)
    )
    return q


@dataclass(frozen=True)
class TargetManifold:
    """The round unit sphere S^{M-1} in R^M as a target manifold."""

    ambient_dim: int
    tubular_radius: float = 0.5
    kind: str = "sphere"

    def __post_init__(self):
        if self.ambient_dim < 2:
            raise DomainError("target sphere needs ambient dimension >= 2")
        if not 0.0 < self.tubular_radius < 1.0:
            raise DomainError("tubular radius of the unit sphere must lie in (0, 1)")

    def distance(self, v) -> np.ndarray:
        """Euclidean distance of ambient vectors to the sphere."""
        return np.abs(np.linalg.norm(np.asarray(v, dtype=float), axis=-1) - 1.0)

    def on_manifold(self, v, tol: float = 1e-9) -> bool:
        return bool(np.all(self.distance(v) <= tol))


def project_to_target(v, tgt: TargetManifold) -> np.ndarray:
    """Nearest-point projection onto the target, row-wise for stacked input.

    Raises TubularViolation (naming the first offending row) if any vector
    has norm at most ``1 - tubular_radius``, i.e. lies on the inner side of
    the tubular neighbourhood, towards the singular point 0.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != tgt.ambient_dim:
        raise DomainError(f"expected ambient dimension {tgt.ambient_dim}, got {v.shape[-1]}")
    nrm = np.linalg.norm(v, axis=-1, keepdims=True)
    dist = np.abs(nrm[..., 0] - 1.0)
    # the projection v / |v| is singular only at 0, so only the inner side is guarded
    bad = ~(nrm[..., 0] > 1.0 - tgt.tubular_radius)
    if np.any(bad):
        idx = int(np.flatnonzero(np.atleast_1d(bad))[0])
        d = float(np.atleast_1d(dist)[idx])
        raise TubularViolation(
            f"vector at distance {d:.3g} from the target exceeds tubular radius "
            f"{tgt.tubular_radius}",
            node=idx if v.ndim > 1 else None,
            distance=d,
        )
    return v / nrm


def tangential_project(p, w, tol: float = 1e-9) -> np.ndarray:
    """Orthogonal projection of ``w`` onto the tangent space of the sphere at ``p``.

    Both arguments may be stacks of shape (N, M).
    """
    p = np.asarray(p, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(np.abs(np.linalg.norm(p, axis=-1) - 1.0) > tol):
        raise DomainError("tangential projection requires a base point on the target")
    return w - np.sum(w * p, axis=-1, keepdims=True) * p

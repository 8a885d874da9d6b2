"""Comparison maps built from given fields, with measured energy estimates.

Chart-local constructions work in the stereographic chart centred at
``center`` (default: the south pole): the mesh is rotated so that ``center``
becomes S, and chart coordinates are y = tau^{-1}(x).  Energies of chart-local
constructions are flat Gagliardo energies in those coordinates,

    sum |u_i - u_j|^p / |y_i - y_j|^{n + s p} cw_i cw_j,

with chart weights cw_i = w_i ((|y_i|^2 + 1) / 2)^n.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .energy import EnergyParams
from .errors import DomainError, GlueFailure, ResolutionError
from .geometry import _coords, project_to_target, rotation_to_south, south_pole, stereo_lift_array, stereo_project_array
from .mesh import Field, SphereMesh, ball_indices, sample


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


class Chart:
    """Stereographic chart of a mesh centred at a point of S^n."""

    def __init__(self, mesh: SphereMesh, center=None):
        self.mesh = mesh
        c = south_pole(mesh.n).coords if center is None else _coords(center)
        self.center = c / np.linalg.norm(c)
        self.Q = rotation_to_south(self.center)
        self.y = stereo_project_array(mesh.nodes @ self.Q.T)
        self.radius = np.linalg.norm(self.y, axis=1)
        finite = np.isfinite(self.radius)
        with np.errstate(invalid="ignore", over="ignore"):
            self.weights = np.where(
                finite, mesh.weights * ((self.radius ** 2 + 1.0) / 2.0) ** mesh.n, 0.0
            )

    def to_sphere(self, y) -> np.ndarray:
        """Points of S^n with chart coordinates ``y`` (shape (K, n))."""
        return stereo_lift_array(np.asarray(y, dtype=float).reshape(-1, self.mesh.n)) @ self.Q

    def energy(self, values, A, B, params: EnergyParams) -> float:
        """Flat Gagliardo energy of ``values`` over chart index sets A x B (order s)."""
        A = np.asarray(A, dtype=np.int64)
        B = np.asarray(B, dtype=np.int64)
        A = A[np.isfinite(self.radius[A])]
        B = B[np.isfinite(self.radius[B])]
        if A.size == 0 or B.size == 0:
            return 0.0
        U = np.asarray(values, dtype=float)
        dy = self.y[A, None, :] - self.y[None, B, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", dy, dy))
        du = U[A, None, :] - U[None, B, :]
        num = np.einsum("ijk,ijk->ij", du, du) ** (params.p / 2.0)
        off = dist > 0.0
        with np.errstate(divide="ignore"):
            ker = np.where(off, dist, 1.0) ** (-(params.n + params.s * params.p))
        terms = np.where(off, num * ker, 0.0) * np.outer(self.weights[A], self.weights[B])
        return float(np.sum(np.sum(terms, axis=1)))


def _on_target(field: Field, points) -> np.ndarray:
    vals = sample(field, points)
    return project_to_target(vals, field.target) if field.target is not None else vals


def _blend(a, b, eta, field: Field, nodes) -> np.ndarray:
    """pi_N((1 - eta) a + eta b) with a tubular check naming the worst node."""
    mix = (1.0 - eta)[:, None] * a + eta[:, None] * b
    if field.target is None:
        return mix
    dist = field.target.distance(mix)
    bad = ~(dist < field.target.tubular_radius)
    if np.any(bad):
        k = int(np.argmax(np.where(np.isfinite(dist), dist, np.inf)))
        node = int(nodes[k])
        raise GlueFailure(
            f"blend leaves the tubular neighbourhood at node {node} "
            f"(distance {dist[k]:.3g} >= {field.target.tubular_radius})",
            node=node,
            distance=float(dist[k]),
        )
    return mix / np.linalg.norm(mix, axis=1, keepdims=True)


def _check_pair(u: Field, v: Field):
    if u.mesh is not v.mesh and not (
        u.mesh.n == v.mesh.n and u.mesh.size == v.mesh.size and np.array_equal(u.mesh.nodes, v.mesh.nodes)
    ):
        raise DomainError("fields live on different meshes")
    if u.target != v.target:
        raise DomainError("fields have different targets")


def cutoff_interpolate(u: Field, v: Field, center, rho: float) -> Field:
    """Replace ``u`` by ``v`` on the chordal ball B(center, rho).

    The result is v inside rho, u outside 2 rho, and the projected convex
    blend with a smoothstep profile in between.
    """
    _check_pair(u, v)
    if not 0.0 < rho < 1.0:
        raise DomainError("cut-off radius must lie in (0, 1) so that 2 rho < 2")
    d = np.linalg.norm(u.mesh.nodes - _coords(center), axis=1)
    out = u.values.copy()
    inner = d < rho
    out[inner] = v.values[inner]
    ring = np.flatnonzero((d >= rho) & (d < 2.0 * rho))
    if ring.size:
        eta = _smoothstep((2.0 * rho - d[ring]) / rho)
        same = np.all(u.values[ring] == v.values[ring], axis=1)
        mixed = _blend(u.values[ring], v.values[ring], eta, u, ring)
        out[ring] = np.where(same[:, None], u.values[ring], mixed)
    return u.with_values(out)


@dataclass(frozen=True)
class GlueEnergyReport:
    """Measured energy of the glued map and the terms of its upper bound.

    ``ratio = lhs / rhs_total`` is the empirical constant of the estimate.
    """

    r: float
    delta: float
    sigma: float
    lhs: float
    u_annulus: float
    v_ball: float
    boundary_u: float
    boundary_v: float
    boundary_term: float
    sphere_term: float
    mismatch_sup: float
    mismatch_term: float
    rhs_total: float
    ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GlueResult:
    field: Field
    report: GlueEnergyReport
    outer: np.ndarray
    inner: np.ndarray
    transition: np.ndarray
    dilated_v: np.ndarray


def dilate(v: Field, factor: float, center=None) -> np.ndarray:
    """Values of y -> v(y / factor) at every node, in the chart centred at ``center``."""
    ch = Chart(v.mesh, center)
    with np.errstate(invalid="ignore"):
        y = ch.y / factor
    return _on_target(v, ch.to_sphere(y))


def luckhaus_glue(u: Field, v: Field, r: float, delta: float, params: EnergyParams,
                  center=None) -> GlueResult:
    """Glue u outside the chart ball B(r) to v dilated into B((1 - delta) r).

    Between radii (1 - delta) r and r the map blends u and v radially along
    their values on the sphere |y| = r; the profile eta is 1 below
    (1 - 3 delta / 4) r and 0 above (1 - delta / 2) r.  S^1 only.
    """
    _check_pair(u, v)
    mesh = u.mesh
    if mesh.n != 1:
        raise DomainError("luckhaus_glue is implemented on S^1")
    if not 0.0 < delta < 0.25:
        raise DomainError("delta must lie in (0, 1/4)")
    if not r > 0.0:
        raise DomainError("glue radius must be positive")
    ch = Chart(mesh, center)
    rad = ch.radius
    outer = np.flatnonzero(rad >= r)
    inner = np.flatnonzero(rad <= (1.0 - delta) * r)
    transition = np.flatnonzero((rad > (1.0 - delta) * r) & (rad < r))
    vd = dilate(v, 1.0 - delta, center)
    out = u.values.copy()
    out[inner] = vd[inner]
    if transition.size:
        sign = np.sign(ch.y[transition, 0])
        theta_pts = ch.to_sphere((sign * r)[:, None])
        u_th = _on_target(u, theta_pts)
        v_th = _on_target(v, theta_pts)
        x = ((1.0 - 0.5 * delta) * r - rad[transition]) / (0.25 * delta * r)
        eta = _smoothstep(x)
        out[transition] = _blend(u_th, v_th, eta, u, transition)
    w = u.with_values(out)

    # energy terms, all in chart coordinates
    s, p, n = params.s, params.p, mesh.n
    sp = s * p
    sigma = max(p - 1.0, sp)
    b2r = np.flatnonzero(rad < 2.0 * r)
    ann = np.flatnonzero((rad >= r) & (rad < 2.0 * r))
    br = np.flatnonzero(rad < r)
    lhs = ch.energy(w.values, b2r, b2r, params)
    e_u = ch.energy(u.values, ann, ann, params)
    e_v = ch.energy(v.values, br, br, params)
    sphere_pts = ch.to_sphere(np.array([[-r], [r]]))
    u_bd = _on_target(u, sphere_pts)
    v_bd = _on_target(v, sphere_pts)

    def boundary_integral(bd_vals, field_vals, idx):
        total = 0.0
        for k, th in enumerate((-r, r)):
            dist = np.abs(ch.y[idx, 0] - th)
            keep = dist > 1e-12
            num = np.sum((bd_vals[k] - field_vals[idx[keep]]) ** 2, axis=1) ** (p / 2.0)
            total += float(np.sum(num * dist[keep] ** (-(n + sp)) * ch.weights[idx[keep]]))
        return total

    bu = boundary_integral(u_bd, u.values, ann)
    bv = boundary_integral(v_bd, v.values, br)
    boundary_term = delta ** (-sp) * r * (bu + bv)
    # the sphere-sphere term vanishes for n = 1 (the boundary has no interior pairs)
    sphere_term = 0.0
    mismatch = float(np.max(np.linalg.norm(u_bd - v_bd, axis=1)))
    mismatch_term = delta ** (-sigma) * r ** (n - sp) * mismatch ** p
    rhs = e_u + e_v + boundary_term + sphere_term + mismatch_term
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    rep = GlueEnergyReport(r, delta, sigma, lhs, e_u, e_v, bu, bv, boundary_term, sphere_term,
                           mismatch, mismatch_term, rhs, ratio)
    return GlueResult(w, rep, outer, inner, transition, vd)


@dataclass(frozen=True)
class InversionResult:
    field: Field
    energy_extended: float
    energy_original: float
    ratio: float


def inversion_extend(u: Field, rho: float, lam: float, params: EnergyParams,
                     center=None) -> InversionResult:
    """Extend u from the chart ball B(rho) by inversion, v(y) = u(rho^2 y / |y|^2).

    ``ratio`` is E_s(v, B(lam rho)) / E_s(u, B(rho)) in chart coordinates
    (1 by convention when both vanish).
    """
    if not rho > 0.0 or lam < 1.0:
        raise DomainError("need rho > 0 and lam >= 1")
    ch = Chart(u.mesh, center)
    rad = ch.radius
    outside = np.flatnonzero(~(rad <= rho))
    out = u.values.copy()
    if outside.size:
        y = ch.y[outside]
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = rho * rho * y / (rad[outside, None] ** 2)
        inv[~np.isfinite(rad[outside])] = 0.0
        out[outside] = _on_target(u, ch.to_sphere(inv))
    v = u.with_values(out)
    big = np.flatnonzero(rad < lam * rho)
    small = np.flatnonzero(rad < rho)
    e_ext = ch.energy(v.values, big, big, params)
    e_orig = ch.energy(u.values, small, small, params)
    if e_orig > 0.0:
        ratio = e_ext / e_orig
    else:
        ratio = 1.0 if e_ext == 0.0 else math.inf
    return InversionResult(v, e_ext, e_orig, ratio)


def capacity_cutoff(mesh: SphereMesh, ell: int, center=None, min_inner_nodes: int = 4) -> Field:
    """Truncated-logarithm cut-off zeta_ell with R = 2^-ell and rho = R^2.

    zeta = clamp(log(R / d) / log(R / rho), 0, 1) in the chordal distance d
    to ``center``: identically 1 on B(rho) and 0 outside B(R).
    """
    if int(ell) != ell or ell < 1:
        raise DomainError("ell must be a positive integer")
    c = south_pole(mesh.n).coords if center is None else _coords(center)
    R = 2.0 ** (-ell)
    rho = R * R
    d = np.linalg.norm(mesh.nodes - c, axis=1)
    if np.count_nonzero(d < rho) < min_inner_nodes:
        raise ResolutionError(
            f"mesh resolves only {np.count_nonzero(d < rho)} nodes inside B(rho_ell), "
            f"need {min_inner_nodes}"
        )
    with np.errstate(divide="ignore"):
        z = np.log(R / d) / math.log(R / rho)
    z = np.clip(np.where(d == 0.0, 1.0, z), 0.0, 1.0)
    return Field(mesh, z[:, None], None)


def opening_map(field: Field, rho: float, center=None) -> Field:
    """Compose ``field`` with the radial clamp phi of the chart centred at ``center``.

    phi is the identity on |y| <= 2 rho, collapses |y| >= 3 rho to the origin,
    and shrinks radially in between (|phi(y)| = 2 (3 rho - |y|)).  The
    translation point of the opening construction is fixed at the origin.
    """
    if not rho > 0.0:
        raise DomainError("opening radius must be positive")
    ch = Chart(field.mesh, center)
    rad = ch.radius
    out = field.values.copy()
    far = np.flatnonzero(~(rad < 3.0 * rho))
    if far.size:
        out[far] = _on_target(field, ch.to_sphere(np.zeros((1, field.mesh.n))))[0]
    mid = np.flatnonzero((rad > 2.0 * rho) & (rad < 3.0 * rho))
    if mid.size:
        y = ch.y[mid]
        scale = 2.0 * (3.0 * rho - rad[mid]) / rad[mid]
        out[mid] = _on_target(field, ch.to_sphere(y * scale[:, None]))
    return field.with_values(out)


__all__ = [
    "Chart",
    "GlueEnergyReport",
    "GlueResult",
    "InversionResult",
    "capacity_cutoff",
    "cutoff_interpolate",
    "dilate",
    "inversion_extend",
    "luckhaus_glue",
    "opening_map",
]

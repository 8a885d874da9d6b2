"""Degree of sphere-valued fields and the small-energy triviality test."""
from __future__ import annotations

import numpy as np

from .energy import EnergyParams, seminorm
from .errors import DomainError, IllConditionedDegree
from .mesh import Field

ANTIPODAL_TOL = 1e-9


def _winding(values: np.ndarray) -> float:
    a = values
    b = np.roll(values, -1, axis=0)
    gap = np.linalg.norm(a - b, axis=1)
    if np.any(gap >= 2.0 - ANTIPODAL_TOL):
        i = int(np.argmax(gap))
        raise IllConditionedDegree(
            f"values at nodes {i} and {(i + 1) % len(values)} are antipodal; "
            "the field is too coarse for a well-defined degree"
        )
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = np.einsum("ij,ij->i", a, b)
    return float(np.sum(np.arctan2(cross, dot))) / (2.0 * np.pi)


def _signed_area(a, b, c) -> np.ndarray:
    # solid angle of the geodesic triangle (Van Oosterom-Strackee)
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(num, den)


def degree(field: Field) -> int:
    """Topological degree of a map S^n -> S^n (n = 1 or 2).

    n = 1 sums signed angle increments between consecutive values; n = 2 sums
    the signed spherical areas of the image triangles.
    """
    mesh = field.mesh
    if field.dim != mesh.n + 1:
        raise DomainError(f"degree needs target S^{mesh.n}, got values in R^{field.dim}")
    U = field.values / np.linalg.norm(field.values, axis=1, keepdims=True)
    if mesh.n == 1:
        return int(np.rint(_winding(U)))
    f = mesh.faces
    for k, l in ((0, 1), (1, 2), (2, 0)):
        gap = np.linalg.norm(U[f[:, k]] - U[f[:, l]], axis=1)
        if np.any(gap >= 2.0 - ANTIPODAL_TOL):
            raise IllConditionedDegree("antipodal values on a mesh edge; degree undefined")
    total = np.sum(_signed_area(U[f[:, 0]], U[f[:, 1]], U[f[:, 2]]))
    return int(np.rint(total / (4.0 * np.pi)))


def winding_number(field: Field) -> float:
    """Unrounded winding number of an S^1 -> S^1 field (diagnostic)."""
    if field.mesh.n != 1 or field.dim != 2:
        raise DomainError("winding_number is defined for S^1 -> S^1 fields")
    return _winding(field.values)


def is_energy_trivial(field: Field, params: EnergyParams, eps: float) -> bool:
    """True when the critical seminorm [u]_{W^{s,n/s}} lies below ``eps``.

    Below a small threshold such maps are homotopic to constants; the
    threshold itself is not computable and is supplied by the caller.
    """
    if eps == np.inf:
        return True
    return seminorm(field, params.at(params.s)) < eps

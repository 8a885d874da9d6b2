"""Conformal rescaling of fields on S^n and the energy bounds it satisfies.

The rescaling u_lambda(x) = u(tau(lambda tau^{-1}(x))) is a Moebius dilation
fixing both poles.  E_s (t = s) is invariant under it; for t > s the energy
picks up the kernel

    K_lambda(r, R) = [ (r^2 + lambda^2) / (lambda (r^2 + 1))
                       * (R^2 + lambda^2) / (lambda (R^2 + 1)) ]^{(n/2)(t/s - 1)}

in chart coordinates, which is what the bounds below control.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .energy import EnergyParams, energy
from .errors import DomainError
from .geometry import SpherePoint, _coords, project_to_target, south_pole, stereo_lift_array, stereo_project_array
from .mesh import Field, ball_indices, complement, sample

BALANCE_RHO_MAX = math.sqrt(4.0 / 5.0)


def conformal_rescale(field: Field, lam: float) -> Field:
    """Pull ``field`` back under the dilation y -> lam * y of the stereographic chart.

    Values are interpolated piecewise-linearly and re-projected onto the
    target.  The north pole is fixed (chart limit).
    """
    if not lam > 0.0:
        raise DomainError(f"rescaling factor must be positive, got {lam}")
    mesh = field.mesh
    if mesh.n == 1 and mesh.size < 32:
        raise DomainError("conformal_rescale needs at least 32 nodes on S^1")
    y = stereo_project_array(mesh.nodes)
    q = stereo_lift_array(lam * y)
    vals = sample(field, q)
    if field.target is not None:
        vals = project_to_target(vals, field.target)
    return field.with_values(vals)


def r_lambda(lam: float) -> float:
    """Chordal radius of the image of the chart ball {|y| < lam} about the south pole."""
    return 2.0 * lam / math.sqrt(lam * lam + 1.0)


def kernel_K(lam, r, R, params: EnergyParams):
    """Kernel K_lambda(r, R) relating E_t(u_lambda) to E_t(u) in chart coordinates."""
    lam = float(lam)
    if not lam > 0.0:
        raise DomainError("lambda must be positive")
    e = 0.5 * params.n * (params.t / params.s - 1.0)
    r2 = np.asarray(r, dtype=float) ** 2
    R2 = np.asarray(R, dtype=float) ** 2
    a = (r2 + lam * lam) / (lam * (r2 + 1.0))
    b = (R2 + lam * lam) / (lam * (R2 + 1.0))
    out = (a * b) ** e
    return float(out) if out.ndim == 0 else out


def kernel_bounds(lam: float, params: EnergyParams) -> dict:
    """The three regime-wise upper bounds for K_lambda."""
    E = params.scaling_exponent
    inner = (2.0 * lam) ** E
    outer = (2.0 / lam) ** E
    return {"both_inside": inner, "mixed": 0.5 * inner + 0.5 * outer, "both_outside": outer}


def kernel_bound_check(lam: float, params: EnergyParams, samples: int = 10_000,
                       seed: int = 0) -> dict:
    """Largest relative violation K / bound - 1 of the regime-wise kernel bounds.

    (r, R) are drawn log-uniformly from [1e-3, 1e3]^2, plus the corner and
    threshold points {1e-3, lam, 1e3}^2.  Values <= 0 mean the bound holds.
    """
    if not 0.0 < lam < 2.0:
        raise DomainError(f"lambda must lie in (0, 2), got {lam}")
    rng = np.random.default_rng(seed)
    r = 10.0 ** rng.uniform(-3.0, 3.0, samples)
    R = 10.0 ** rng.uniform(-3.0, 3.0, samples)
    edge = np.array([1e-3, lam, 1e3])
    r = np.concatenate([r, np.repeat(edge, 3)])
    R = np.concatenate([R, np.tile(edge, 3)])
    K = kernel_K(lam, r, R, params)
    bounds = kernel_bounds(lam, params)
    r_in, R_in = r <= lam, R <= lam
    r_out, R_out = r >= lam, R >= lam
    masks = {
        "both_inside": r_in & R_in,
        "mixed": (r_in & R_out) | (r_out & R_in),
        "both_outside": r_out & R_out,
    }
    out = {}
    for name, m in masks.items():
        out[name] = float(np.max(K[m] / bounds[name] - 1.0)) if np.any(m) else None
    out["max"] = max(v for v in out.values() if v is not None)
    out["samples"] = int(r.size)
    return out


@dataclass(frozen=True)
class BoundReport:
    """Both sides of the rescaled-energy inequality.

    ``rhs = ball_factor * ball_energy + complement_factor * complement_energy``.
    """

    lam: float
    t: float
    r_lambda: float
    lhs: float
    ball_energy: float
    complement_energy: float
    ball_factor: float
    complement_factor: float
    rhs: float
    slack: float

    def to_dict(self) -> dict:
        return asdict(self)


def rescale_bound_check(field: Field, lam: float, params: EnergyParams) -> BoundReport:
    """Evaluate E_t(u_lambda) against its bound through the energy of u split at D(S, r_lambda)."""
    if not 0.0 < lam < 2.0:
        raise DomainError(f"lambda must lie in (0, 2), got {lam}")
    if not params.t > params.s:
        raise DomainError("the rescaled-energy bound is stated for t > s")
    mesh = field.mesh
    rl = r_lambda(lam)
    ball = ball_indices(mesh, south_pole(mesh.n), rl)
    comp = complement(mesh, ball)
    lhs = energy(conformal_rescale(field, lam), params)
    e_ball = energy(field, params, ball, None)
    e_comp = energy(field, params, comp, None)
    E = params.scaling_exponent
    fb, fc = (2.0 * lam) ** E, (2.0 / lam) ** E
    rhs = fb * e_ball + fc * e_comp
    return BoundReport(lam, params.t, rl, lhs, e_ball, e_comp, fb, fc, rhs, rhs - lhs)


@dataclass(frozen=True)
class BalanceReport:
    """Energy near y0 against the energy away from it.

    ``implied_constant = lhs * rho^{n (t/s - 1)} / rhs_core`` is the smallest
    constant for which the balanced-energy estimate holds for this field.
    """

    rho: float
    t: float
    center: list
    lhs: float
    rhs_core: float
    implied_constant: float

    def to_dict(self) -> dict:
        return asdict(self)


def balance_ratio(field_t: Field, y0, rho: float, params: EnergyParams) -> BalanceReport:
    """Compare E_t(D(y0, rho) x S^n) with E_t((S^n minus D(y0, rho)) x S^n)."""
    if not 0.0 < rho < BALANCE_RHO_MAX:
        raise DomainError(f"rho must lie in (0, sqrt(4/5)), got {rho}")
    mesh = field_t.mesh
    c = _coords(y0)
    ball = ball_indices(mesh, c, rho)
    comp = complement(mesh, ball)
    lhs = energy(field_t, params, ball, None)
    rhs = energy(field_t, params, comp, None)
    if rhs > 0.0:
        implied = lhs * rho ** params.scaling_exponent / rhs
    else:
        implied = 0.0 if lhs == 0.0 else math.inf
    return BalanceReport(rho, params.t, [float(x) for x in c], lhs, rhs, implied)


__all__ = [
    "BalanceReport",
    "BoundReport",
    "SpherePoint",
    "balance_ratio",
    "conformal_rescale",
    "kernel_K",
    "kernel_bound_check",
    "kernel_bounds",
    "r_lambda",
    "rescale_bound_check",
]

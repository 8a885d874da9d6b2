"""Numerical checks tying the discrete machinery to its analytic counterparts."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import __version__
from .energy import EnergyParams, energy, energy_gradient
from .errors import DomainError
from .geometry import project_to_target, south_pole, tangential_project
from .homotopy import degree
from .mesh import Field, build_mesh, power_map
from .minimizer import ContinuationSchedule, MinimizeConfig, continuation, detect_concentration
from .rescaling import balance_ratio, conformal_rescale


def check_gradient(field: Field, params: EnergyParams, h: float = 1e-6) -> float:
    """Max relative error of :func:`energy_gradient` against central differences.

    Only coordinates with |g| > 1e-10 enter; returns 0 if there are none.
    The difference for node i is taken of E({i} x all) + E(rest x {i}), the
    part of the energy that depends on u_i; dropping the constant block
    E(rest x rest) keeps cancellation error well below the tolerance.
    """
    mesh = field.mesh
    if mesh.size > 128:
        raise DomainError("check_gradient is limited to N <= 128 nodes")
    g = energy_gradient(field, params)
    U = np.array(field.values)
    fd = np.zeros_like(U)
    everyone = np.arange(mesh.size)

    def local(values, i):
        f = Field(mesh, values)
        rest = everyone[everyone != i]
        return energy(f, params, [i], None) + energy(f, params, rest, [i])

    if params.quad.diagonal != "exclude":
        local = lambda values, i: energy(Field(mesh, values), params)  # noqa: E731
    for i in range(U.shape[0]):
        for k in range(U.shape[1]):
            up = U.copy()
            up[i, k] += h
            dn = U.copy()
            dn[i, k] -= h
            fd[i, k] = (local(up, i) - local(dn, i)) / (2.0 * h)
    mask = np.abs(g) > 1e-10
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(fd[mask] - g[mask]) / np.abs(g[mask])))


def random_field(mesh, M: int, rng: np.random.Generator) -> Field:
    """Gaussian directions normalised onto S^{M-1}."""
    from .geometry import TargetManifold

    v = rng.normal(size=(mesh.size, M))
    return Field(mesh, v / np.linalg.norm(v, axis=1, keepdims=True), TargetManifold(M))


def perturbed_power_map(mesh, k: int, noise: float, rng: np.random.Generator) -> Field:
    """theta -> k theta plus seeded tangential Gaussian noise, re-projected."""
    u = power_map(mesh, k)
    xi = tangential_project(u.values, noise * rng.normal(size=u.values.shape))
    return u.with_values(project_to_target(u.values + xi, u.target))


@dataclass(frozen=True)
class SuperdifficultResult:
    lhs: float
    bound: float
    ratio: float


def check_superdifficult(alpha: float, lam: float, theta, omega, R: float = 1.0,
                         grid: int = 1000) -> SuperdifficultResult:
    """Midpoint-rule value of the double integral of |r theta - rho omega|^-alpha over [lam R, R]^2.

    ``bound`` is (1 - lam) lam^{1-alpha} R |R theta - R omega|^{1-alpha}; the
    ratio is an empirical sample of the constant C(alpha) of the estimate.
    """
    if not alpha > 1.0:
        raise DomainError("alpha must exceed 1")
    if not 0.0 < lam < 1.0 or not R > 0.0:
        raise DomainError("need lam in (0, 1) and R > 0")
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    gap = float(np.linalg.norm(theta - omega))
    if gap < 1e-12:
        raise DomainError("theta and omega coincide; the bound degenerates")
    hstep = (1.0 - lam) * R / grid
    r = lam * R + hstep * (np.arange(grid) + 0.5)
    # |r theta - rho omega|^2 = (r - rho)^2 + r rho |theta - omega|^2 for unit vectors
    total = 0.0
    for chunk in np.array_split(np.arange(grid), max(1, grid // 250)):
        rr = r[chunk, None]
        d2 = (rr - r[None, :]) ** 2 + rr * r[None, :] * gap * gap
        total += float(np.sum(np.sum(d2 ** (-0.5 * alpha), axis=1)))
    lhs = total * hstep * hstep
    bound = (1.0 - lam) * lam ** (1.0 - alpha) * R * (R * gap) ** (1.0 - alpha)
    return SuperdifficultResult(lhs, bound, lhs / bound)


def unit_pair(angle: float):
    """Two unit vectors of R^2 enclosing ``angle``."""
    return np.array([1.0, 0.0]), np.array([math.cos(angle), math.sin(angle)])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def bubbling_experiment(k: int, s: float, schedule, resolution: int, eps: float = math.inf,
                        rho: float = 0.5, balance_rhos=(0.3, 0.5), noise: float = 0.0,
                        concentrate: float = 1.0, seed: int = 0,
                        cfg: MinimizeConfig = MinimizeConfig(), params: EnergyParams | None = None,
                        field0: Field | None = None):
    """Continuation from a degree-k map with concentration and balance diagnostics.

    The initial field is theta -> k theta (optionally with tangential noise),
    conformally rescaled by ``concentrate``.  Every stage reports its
    concentration centres and, at each centre (the south pole when there is
    none), the balance ratio for every radius in ``balance_rhos``.

    Returns ``(report_dict, ContinuationReport)``.
    """
    if k == 0:
        raise DomainError("bubbling experiment needs a non-zero degree")
    if params is None:
        params = EnergyParams(1, s)
    sched = schedule if isinstance(schedule, ContinuationSchedule) else ContinuationSchedule(s, tuple(schedule))
    if field0 is None:
        mesh = build_mesh(1, resolution)
        rng = np.random.default_rng(seed)
        field0 = perturbed_power_map(mesh, k, noise, rng) if noise > 0 else power_map(mesh, k)
        if concentrate != 1.0:
            field0 = conformal_rescale(field0, concentrate)
    mesh = field0.mesh
    cont = continuation(field0, sched, params, cfg, eps=eps, rho=rho)
    stages = []
    for st, res in zip(cont.stages, cont.results):
        pt = params.at(st["t"])
        centers = st["centers"]
        anchors = [mesh.nodes[c] for c in centers] or [south_pole(mesh.n).coords]
        balance = [
            balance_ratio(res.field, y0, br, pt).to_dict() for y0 in anchors for br in balance_rhos
        ]
        stages.append({
            "t": st["t"],
            "energy_t": st["energy_t"],
            "energy_s": st["energy_s"],
            "residual": st["residual"],
            "residual_initial": st["residual_initial"],
            "iterations": st["iterations"],
            "status": st["status"],
            "monotone": st["monotone"],
            "uniform_bound_holds": st["uniform_bound_holds"],
            "degree": st["degree"],
            "centers": [mesh.nodes[c].tolist() for c in centers],
            "balance": balance,
        })
    report = {
        "config": {
            "k": k, "s": s, "schedule": list(sched.t_values), "resolution": mesh.resolution,
            "eps": eps, "rho": rho, "balance_rhos": list(balance_rhos), "noise": noise,
            "concentrate": concentrate, "seed": seed, "optimizer": cfg.to_dict(),
            "params": params.to_dict(),
        },
        "initial": {"degree": degree(field0), "energy_s": energy(field0, params.at(s))},
        "stages": stages,
        "provenance": {
            "version": __version__,
            "reduction": "deterministic" if params.quad.deterministic else "unordered",
        },
    }
    return _jsonable(report), cont

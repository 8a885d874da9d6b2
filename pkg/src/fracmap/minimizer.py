"""Projected-gradient minimisation of E_t and continuation t -> s+."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .energy import EnergyParams, energy, energy_gradient, el_residual, row_energies
from .errors import DomainError, IllConditionedDegree, TubularViolation, UnsupportedExponent
from .geometry import project_to_target, tangential_project
from .homotopy import degree
from .mesh import Field, ball_indices

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MinimizeConfig:
    """Optimizer settings.

    ``max_node_move`` caps the per-node displacement of a trial step (in
    ambient units); it keeps the iterate in its homotopy class on coarse
    meshes.  ``step_growth`` multiplies the last accepted step to form the
    next trial step.
    """

    max_iters: int = 20000
    tol_grad: float = 1e-8
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    initial_step: float = 1.0
    step_growth: float = 2.0
    max_node_move: float = 0.1
    min_step: float = 1e-14

    def __post_init__(self):
        if self.max_iters < 0:
            raise DomainError("max_iters must be non-negative")
        if not 0.0 < self.c1 < 1.0:
            raise DomainError("Armijo constant c1 must lie in (0, 1)")
        if not 0.0 < self.backtrack < 1.0:
            raise DomainError("backtrack factor must lie in (0, 1)")
        if self.max_backtracks < 1 or self.initial_step <= 0 or self.tol_grad <= 0:
            raise DomainError("max_backtracks, initial_step and tol_grad must be positive")
        if self.step_growth < 1.0 or self.max_node_move <= 0:
            raise DomainError("step_growth must be >= 1 and max_node_move positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ContinuationSchedule:
    s: float
    t_values: tuple

    def __post_init__(self):
        t = tuple(float(x) for x in self.t_values)
        if not t:
            raise DomainError("continuation schedule is empty")
        if min(t) <= self.s or max(t) >= 1.0:
            raise DomainError("schedule values must lie in (s, 1)")
        if any(b >= a for a, b in zip(t, t[1:])):
            raise DomainError("schedule must be strictly decreasing")
        object.__setattr__(self, "t_values", t)

    @classmethod
    def geometric(cls, s: float, delta0: float = 0.2, stages: int = 4) -> "ContinuationSchedule":
        """t_k = s + delta0 2^{-k}, k = 0 .. stages-1."""
        return cls(s, tuple(s + delta0 * 2.0 ** (-k) for k in range(stages)))


@dataclass(frozen=True)
class MinimizeResult:
    field: Field
    energies: list
    residuals: list
    steps: list
    iterations: int
    converged: bool
    status: str
    params: EnergyParams

    @property
    def monotone(self) -> bool:
        e = self.energies
        return all(b <= a for a, b in zip(e, e[1:]))

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
            "energy_initial": self.energies[0],
            "energy_final": self.energies[-1],
            "residual_initial": self.residuals[0],
            "residual_final": self.residuals[-1],
            "monotone": self.monotone,
        }


def minimize(field0: Field, params: EnergyParams, cfg: MinimizeConfig = MinimizeConfig(),
             callback=None) -> MinimizeResult:
    """Minimise E_t over target-valued fields by projected gradient descent.

    Each iteration moves along the negative tangential gradient, retracts by
    the nearest-point projection and accepts the step under the Armijo rule.
    Trial steps start from the previous accepted step times ``step_growth``.
    ``callback(k, field, energy)`` is invoked after every accepted step.
    """
    if field0.target is None:
        raise DomainError("minimize needs a target-valued field")
    if params.p < 2.0:
        raise UnsupportedExponent(f"minimize needs p = n/s >= 2, got {params.p}")
    tgt = field0.target
    u = field0
    E = energy(u, params)
    tg = tangential_project(u.values, energy_gradient(u, params))
    res = float(np.sqrt(np.sum(u.mesh.weights * np.einsum("ij,ij->i", tg, tg))))
    energies, residuals, steps = [E], [res], []
    alpha = cfg.initial_step
    status = "converged" if res <= cfg.tol_grad else "max_iters"
    k = 0
    while res > cfg.tol_grad and k < cfg.max_iters:
        gnorm2 = float(np.sum(tg * tg))
        move = float(np.max(np.linalg.norm(tg, axis=1)))
        trial = min(alpha, cfg.max_node_move / move) if move > 0 else alpha
        accepted = False
        for _ in range(cfg.max_backtracks):
            try:
                cand = project_to_target(u.values - trial * tg, tgt)
            except TubularViolation:
                trial *= cfg.backtrack
                continue
            v = u.with_values(cand)
            Ev = energy(v, params)
            if Ev <= E - cfg.c1 * trial * gnorm2:
                accepted = True
                break
            trial *= cfg.backtrack
            if trial < cfg.min_step:
                break
        if not accepted:
            status = "stalled"
            log.info("line search stalled at iteration %d (energy %.6g)", k, E)
            break
        u, E = v, Ev
        k += 1
        alpha = trial * cfg.step_growth
        tg = tangential_project(u.values, energy_gradient(u, params))
        res = float(np.sqrt(np.sum(u.mesh.weights * np.einsum("ij,ij->i", tg, tg))))
        energies.append(E)
        residuals.append(res)
        steps.append(trial)
        if callback is not None:
            callback(k, u, E)
        if res <= cfg.tol_grad:
            status = "converged"
    return MinimizeResult(u, energies, residuals, steps, k, status == "converged", status, params)


def detect_concentration(field: Field, params: EnergyParams, eps: float, rho: float) -> list[int]:
    """Mesh nodes around which the energy E(ball(c, rho) x S^n) exceeds ``eps``.

    Candidates are visited in order of decreasing ball energy (ties by index);
    a candidate within ``rho`` of an already reported centre is suppressed.
    """
    if not 0.0 < rho < 2.0:
        raise DomainError(f"concentration radius must lie in (0, 2), got {rho}")
    mesh = field.mesh
    e = row_energies(field, params)
    X = mesh.nodes
    d = np.sqrt(np.maximum(2.0 - 2.0 * (X @ X.T), 0.0))
    ball_e = (d < rho).astype(float) @ e
    order = np.lexsort((np.arange(mesh.size), -ball_e))
    centers: list[int] = []
    for c in order:
        if ball_e[c] <= eps:
            break
        if all(np.linalg.norm(X[c] - X[q]) >= rho for q in centers):
            centers.append(int(c))
    return centers


def _safe_degree(field: Field):
    try:
        if field.dim == field.mesh.n + 1:
            return degree(field)
    except IllConditionedDegree:
        pass
    return None


@dataclass(frozen=True)
class ContinuationReport:
    stages: list
    results: list = dc_field(repr=False)

    @property
    def final_field(self) -> Field:
        return self.results[-1].field

    def to_dict(self) -> dict:
        return {"stages": self.stages}


def continuation(field0: Field, schedule: ContinuationSchedule, params_base: EnergyParams,
                 cfg: MinimizeConfig = MinimizeConfig(), eps: float = math.inf,
                 rho: float = 0.5) -> ContinuationReport:
    """Minimise E_{t_k} for each t_k of the schedule, warm-starting every stage.

    Every stage records E_{t_k} and E_s of its minimiser, residuals, degree,
    concentration centres (threshold ``eps`` at radius ``rho``) and the check
    E_s <= 2^{(t_k - s) p} E_{t_k}.
    """
    if abs(schedule.s - params_base.s) > 1e-15:
        raise DomainError("schedule and parameters disagree on s")
    u = field0
    stages, results = [], []
    ps = params_base.at(params_base.s)
    for t in schedule.t_values:
        pt = params_base.at(t)
        warm_energy = energy(u, pt)
        r = minimize(u, pt, cfg)
        u = r.field
        e_t = r.energies[-1]
        e_s = energy(u, ps)
        bound = 2.0 ** ((t - params_base.s) * params_base.p) * e_t
        stages.append({
            "t": t,
            "warm_start_energy_t": warm_energy,
            "energy_t": e_t,
            "energy_s": e_s,
            "uniform_bound": bound,
            "uniform_bound_holds": bool(e_s <= bound * (1.0 + 1e-12)),
            "residual_initial": r.residuals[0],
            "residual": r.residuals[-1],
            "iterations": r.iterations,
            "status": r.status,
            "monotone": r.monotone,
            "degree": _safe_degree(u),
            "centers": detect_concentration(u, pt, eps, rho) if math.isfinite(eps) else [],
        })
        results.append(r)
        if r.status == "stalled":
            log.warning("stage t=%g stalled after %d iterations", t, r.iterations)
    return ContinuationReport(stages, results)

"""Discrete Gagliardo energies E_{t,p} on sphere meshes.

The discrete energy of a field u over index sets A, B is

    E(u; A, B) = sum_{i in A} sum_{j in B, j != i} |u_i - u_j|^p d_ij^{-(n + t p)} w_i w_j

with d_ij the chordal distance of the nodes and w the quadrature weights.
Row blocks are evaluated independently (optionally on a thread pool) and
reduced in a fixed order, so results do not depend on the thread count.
"""
from __future__ import annotations

import os
import weakref
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DomainError, SingularityError, UnsupportedExponent
from .geometry import tangential_project
from .mesh import Field, SphereMesh

BLOCK_ROWS = 128
DIAGONAL_MODES = ("exclude", "exclude_with_local_correction")

_threads = max(1, int(os.environ.get("FRACMAP_THREADS", 0) or (os.cpu_count() or 1)))


def set_num_threads(count: int) -> None:
    """Size of the worker pool used by energy and gradient evaluations."""
    global _threads
    if count < 1:
        raise ValueError("thread count must be positive")
    _threads = int(count)


def get_num_threads() -> int:
    return _threads


@dataclass(frozen=True)
class QuadraturePolicy:
    """How the discrete double sum treats the diagonal and reduces partial sums.

    ``exclude`` drops i = j.  ``exclude_with_local_correction`` (S^1 only)
    adds for every node the integral of the locally linearised integrand over
    its own cell, which removes the O(1/N) diagonal deficit.
    """

    diagonal: str = "exclude"
    deterministic: bool = True

    def __post_init__(self):
        if self.diagonal not in DIAGONAL_MODES:
            raise DomainError(f"unknown diagonal policy {self.diagonal!r}")

    def to_dict(self) -> dict:
        return {"diagonal": self.diagonal, "deterministic": self.deterministic}


@dataclass(frozen=True)
class EnergyParams:
    """Orders and exponent of E_{t, n/s}."""

    n: int
    s: float
    t: float | None = None
    p: float | None = None
    quad: QuadraturePolicy = dc_field(default_factory=QuadraturePolicy)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise DomainError(f"domain dimension must be 1 or 2, got {self.n}")
        if not 0.0 < self.s < 1.0:
            raise DomainError(f"s must lie in (0, 1), got {self.s}")
        if self.t is None:
            object.__setattr__(self, "t", float(self.s))
        if not self.s <= self.t < 1.0:
            raise DomainError(f"t must lie in [s, 1), got t={self.t} with s={self.s}")
        p = self.n / self.s
        if self.p is not None and abs(self.p - p) > 1e-14 * p:
            raise DomainError(f"p must equal n/s = {p}, got {self.p}")
        object.__setattr__(self, "p", p)

    @property
    def kernel_exponent(self) -> float:
        return self.n + self.t * self.p

    @property
    def scaling_exponent(self) -> float:
        """n (t/s - 1), the power by which E_t fails to be conformally invariant."""
        return self.n * (self.t / self.s - 1.0)

    def at(self, t: float) -> "EnergyParams":
        return EnergyParams(self.n, self.s, t, quad=self.quad)

    def to_dict(self) -> dict:
        return {"n": self.n, "s": self.s, "t": self.t, "p": self.p, "quad": self.quad.to_dict()}


def pair_kernel(d, params: EnergyParams):
    """d^{-(n + t p)} for chordal distance d > 0."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0.0):
        raise SingularityError("pair kernel evaluated at non-positive distance")
    out = d ** (-params.kernel_exponent)
    return float(out) if out.ndim == 0 else out


_kernel_cache: "weakref.WeakKeyDictionary[SphereMesh, dict]" = weakref.WeakKeyDictionary()


def weighted_kernel(mesh: SphereMesh, exponent: float) -> np.ndarray:
    """Matrix d_ij^{-exponent} w_i w_j with a zero diagonal (cached per mesh)."""
    per_mesh = _kernel_cache.setdefault(mesh, {})
    key = float(exponent)
    if key not in per_mesh:
        X = mesh.nodes
        gram = np.clip(X @ X.T, -1.0, 1.0)
        d2 = np.maximum(2.0 - 2.0 * gram, 0.0)
        # exact differences are more accurate than the Gram identity for close nodes
        close = d2 < 1e-4
        if np.any(close):
            ii, jj = np.nonzero(close)
            diff = X[ii] - X[jj]
            d2[ii, jj] = np.einsum("ij,ij->i", diff, diff)
        np.fill_diagonal(d2, 1.0)
        K = d2 ** (-0.5 * key) * np.outer(mesh.weights, mesh.weights)
        np.fill_diagonal(K, 0.0)
        K.setflags(write=False)
        if len(per_mesh) > 8:
            per_mesh.clear()
        per_mesh[key] = K
    return per_mesh[key]


def _as_index(idx, N):
    if idx is None:
        return np.arange(N)
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= N):
        raise DomainError("index set out of range for this mesh")
    return idx


def _blocks(rows: np.ndarray):
    return [rows[k:k + BLOCK_ROWS] for k in range(0, rows.size, BLOCK_ROWS)]


def _map_blocks(fn, rows, deterministic=True):
    """Apply ``fn`` to fixed row blocks; returns the list of block results in order.

    In non-deterministic mode the scalar block results are returned in
    completion order instead.
    """
    blocks = _blocks(rows)
    if _threads == 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=_threads) as pool:
        if deterministic:
            return list(pool.map(fn, blocks))
        futures = [pool.submit(fn, b) for b in blocks]
        return [f.result() for f in as_completed(futures)]


def _pow_sq(sq: np.ndarray, half_power: float) -> np.ndarray:
    if half_power == 1.0:
        return sq
    return sq ** half_power


def _cell_integral(params: EnergyParams, w: float) -> float:
    """Integral of |x - y|^{p - n - t p} over a cell of length w squared (n = 1)."""
    a = params.p - params.n - params.t * params.p
    return 2.0 * w ** (a + 2.0) / ((a + 1.0) * (a + 2.0))


def _local_slopes(mesh: SphereMesh, U: np.ndarray) -> np.ndarray:
    h = 2.0 * np.pi / mesh.size
    return (np.roll(U, -1, axis=0) - np.roll(U, 1, axis=0)) / (2.0 * h)


def _check_correction(mesh: SphereMesh, params: EnergyParams) -> bool:
    if params.quad.diagonal != "exclude_with_local_correction":
        return False
    if mesh.n != 1:
        raise DomainError("the local diagonal correction is implemented for S^1 meshes only")
    return True


def row_energies(field: Field, params: EnergyParams, B=None) -> np.ndarray:
    """Per-node contributions e_i = sum_{j in B} |u_i - u_j|^p K_ij w_i w_j."""
    mesh = field.mesh
    U = field.values
    Bi = _as_index(B, mesh.size)
    K = weighted_kernel(mesh, params.kernel_exponent)
    half = params.p / 2.0
    UB = U[Bi]

    def block(rows):
        diff = U[rows, None, :] - UB[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        return np.sum(_pow_sq(sq, half) * K[np.ix_(rows, Bi)], axis=1)

    e = np.concatenate(_map_blocks(block, np.arange(mesh.size))) if mesh.size else np.zeros(0)
    if _check_correction(mesh, params):
        inB = np.zeros(mesh.size, dtype=bool)
        inB[Bi] = True
        D = _local_slopes(mesh, U)
        c = _cell_integral(params, 2.0 * np.pi / mesh.size)
        e = e + np.where(inB, c * _pow_sq(np.einsum("ij,ij->i", D, D), half), 0.0)
    return e


def energy(field: Field, params: EnergyParams, A=None, B=None) -> float:
    """Discrete E_{t,p}(u; A x B); ``None`` stands for all nodes."""
    mesh = field.mesh
    if mesh.n != params.n:
        raise DomainError("mesh dimension and energy parameters disagree")
    U = field.values
    Ai = _as_index(A, mesh.size)
    Bi = _as_index(B, mesh.size)
    if Ai.size == 0 or Bi.size == 0:
        return 0.0
    K = weighted_kernel(mesh, params.kernel_exponent)
    half = params.p / 2.0
    UB = U[Bi]

    def block(rows):
        diff = U[rows, None, :] - UB[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        return np.sum(_pow_sq(sq, half) * K[np.ix_(rows, Bi)], axis=1)

    det = params.quad.deterministic
    parts = _map_blocks(block if det else (lambda r: float(np.sum(block(r)))), Ai, det)
    if det:
        total = float(np.sum(np.concatenate(parts)))
    else:
        total = 0.0
        for x in parts:
            total += x
    if _check_correction(mesh, params):
        both = np.intersect1d(Ai, Bi)
        if both.size:
            D = _local_slopes(mesh, U)[both]
            c = _cell_integral(params, 2.0 * np.pi / mesh.size)
            total += float(np.sum(c * _pow_sq(np.einsum("ij,ij->i", D, D), half)))
    return total


def seminorm(field: Field, params: EnergyParams) -> float:
    """[u]_{W^{t,p}} = E_{t,p}(u)^{1/p}."""
    return energy(field, params) ** (1.0 / params.p)


def energy_gradient(field: Field, params: EnergyParams) -> np.ndarray:
    """Exact gradient of :func:`energy` (full x full) with respect to the node values.

    Returns an array of shape (N, M).  Requires p >= 2.
    """
    p = params.p
    if p < 2.0:
        raise UnsupportedExponent(f"gradient needs p >= 2, got p = {p}")
    mesh = field.mesh
    U = field.values
    K = weighted_kernel(mesh, params.kernel_exponent)
    half = (p - 2.0) / 2.0

    def block(rows):
        diff = U[rows, None, :] - U[None, :, :]
        if half == 0.0:
            coef = K[rows]
        else:
            sq = np.einsum("ijk,ijk->ij", diff, diff)
            coef = _pow_sq(sq, half) * K[rows]
        return np.sum(coef[:, :, None] * diff, axis=1)

    g = 2.0 * p * np.concatenate(_map_blocks(block, np.arange(mesh.size)))
    if _check_correction(mesh, params):
        h = 2.0 * np.pi / mesh.size
        D = _local_slopes(mesh, U)
        c = _cell_integral(params, h)
        dD = p * c * _pow_sq(np.einsum("ij,ij->i", D, D), half)[:, None] * D / (2.0 * h)
        g = g + np.roll(dD, 1, axis=0) - np.roll(dD, -1, axis=0)
    return g


def tangential_gradient(field: Field, params: EnergyParams) -> np.ndarray:
    return tangential_project(field.values, energy_gradient(field, params))


def el_residual(field: Field, params: EnergyParams) -> float:
    """Weighted l2 norm of the tangential energy gradient.

    Vanishes exactly at critical points of the discrete energy restricted to
    target-valued fields.
    """
    tg = tangential_gradient(field, params)
    return float(np.sqrt(np.sum(field.mesh.weights * np.einsum("ij,ij->i", tg, tg))))

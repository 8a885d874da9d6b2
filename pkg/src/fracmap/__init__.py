"""Discrete fractional Gagliardo energies for sphere-valued maps on spheres."""

__version__ = "0.1.0"

from .energy import EnergyParams, QuadraturePolicy, el_residual, energy, energy_gradient, pair_kernel, seminorm
from .geometry import (
    SpherePoint,
    TargetManifold,
    chordal_distance,
    project_to_target,
    stereo_lift,
    stereo_project,
    tangential_project,
)
from .homotopy import degree, is_energy_trivial
from .mesh import Field, SphereMesh, ball_indices, build_mesh, load_field, save_field

__all__ = [
    "EnergyParams",
    "Field",
    "QuadraturePolicy",
    "SphereMesh",
    "SpherePoint",
    "TargetManifold",
    "ball_indices",
    "build_mesh",
    "chordal_distance",
    "degree",
    "el_residual",
    "energy",
    "energy_gradient",
    "is_energy_trivial",
    "load_field",
    "pair_kernel",
    "project_to_target",
    "save_field",
    "seminorm",
    "stereo_lift",
    "stereo_project",
    "tangential_project",
]

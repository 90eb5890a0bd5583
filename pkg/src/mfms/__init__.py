"""Meshfree multiscale solver for single-phase flow in fractured media.

The pipeline: a structured triangular mesh with fractures snapped onto its
edges, a density-adapted point cloud whose nodes carry overlapping circular
supports, local spectral basis functions glued by a partition of unity, and
implicit or partially explicit time stepping on the resulting coarse system.
"""

from .basis import MultiscaleSpace, build_multiscale_space, shepard_weights
from .cloud import CloudParams, PointCloud, build_point_cloud, compute_density
from .coarse import (
    CoarseSystem,
    estimate_stable_tau,
    project_initial,
    project_system,
    run_coarse,
)
from .fem import FineSystem, MaterialParams, Trajectory, build_fine_system, run_fine_reference
from .geometry import (
    FineMesh,
    build_structured_trimesh,
    load_fractures,
    snap_fractures,
)
from .harness import (
    DEFAULT_CONFIG,
    ExperimentReport,
    load_config,
    relative_errors,
    resolve_config,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "CloudParams",
    "CoarseSystem",
    "DEFAULT_CONFIG",
    "ExperimentReport",
    "FineMesh",
    "FineSystem",
    "MaterialParams",
    "MultiscaleSpace",
    "PointCloud",
    "Trajectory",
    "build_fine_system",
    "build_multiscale_space",
    "build_point_cloud",
    "build_structured_trimesh",
    "compute_density",
    "estimate_stable_tau",
    "load_config",
    "load_fractures",
    "project_initial",
    "project_system",
    "relative_errors",
    "resolve_config",
    "run_coarse",
    "run_experiment",
    "run_fine_reference",
    "shepard_weights",
    "snap_fractures",
    "__version__",
]

"""P1 finite elements on triangles with 1D fracture overlays.

Fractures are lower-dimensional elements living on fine-mesh edges; their
mass/stiffness contributions are scaled by the aperture and added on top of
the 2D matrix terms, so matrix and fracture share one pressure unknown per
vertex.  Dirichlet data is imposed by a large diagonal penalty, which keeps
every operator assembled once and symmetric.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import dirichlet_vertices, triangle_areas
from .linalg import csr_from_triplets

#: consistent P1 mass on the reference triangle, times 12/area
_MASS_BASE = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
#: consistent P1 mass on a segment, times 6/length
_EDGE_MASS_BASE = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
_EDGE_STIFF_BASE = np.array([[1.0, -1.0], [-1.0, 1.0]])

PENALTY_SCALE = 1e12


@dataclass(frozen=True)
class MaterialParams:
    """Physical and time-discretization parameters of a run."""

    c_matrix: float = 0.4
    c_fracture: float = 1.0
    k_matrix: float = 1e-2
    k_fracture: float = 1e3
    viscosity: float = 1.0
    aperture: float = 1.0
    p_initial: float = 1.0
    p_boundary: float = 10.0
    tau: float = 3.0
    n_steps: int = 300

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


@dataclass
class Trajectory:
    """Time series of fine-grid nodal pressure vectors.

    Coarse schemes store the fine-grid reconstruction of their solution, so
    all trajectories are directly comparable.
    """

    scheme: str
    times: np.ndarray
    values: np.ndarray  # (n_times, n_vertices)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        if self.values.shape[0] != self.times.shape[0]:
            raise ValueError("times/values length mismatch")


def triangle_mass_triplets(vertices, triangles, coeff):
    """Triplets of the consistent P1 mass, scaled by a constant coefficient."""
    if triangles.shape[0] == 0 or coeff == 0.0:
        z = np.zeros(0)
        return z.astype(np.int64), z.astype(np.int64), z
    areas = triangle_areas(vertices, triangles)
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    vals = np.outer(coeff * areas, _MASS_BASE.ravel()).ravel()
    return rows, cols, vals


def triangle_stiffness_triplets(vertices, triangles, coeff):
    """Triplets of the P1 stiffness (grad-grad), constant coefficient."""
    if triangles.shape[0] == 0 or coeff == 0.0:
        z = np.zeros(0)
        return z.astype(np.int64), z.astype(np.int64), z
    areas = triangle_areas(vertices, triangles)
    x = vertices[triangles, 0]
    y = vertices[triangles, 1]
    b = y[:, [1, 2, 0]] - y[:, [2, 0, 1]]
    c = x[:, [2, 0, 1]] - x[:, [1, 2, 0]]
    local = (
        b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]
    ) / (4.0 * areas)[:, None, None]
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    return rows, cols, (coeff * local).reshape(-1)


def edge_mass_triplets(vertices, edges, coeff):
    """Triplets of the 1D consistent mass along fracture edges."""
    if edges.shape[0] == 0 or coeff == 0.0:
        z = np.zeros(0)
        return z.astype(np.int64), z.astype(np.int64), z
    lengths = np.linalg.norm(
        vertices[edges[:, 1]] - vertices[edges[:, 0]], axis=1
    )
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    vals = np.outer(coeff * lengths, _EDGE_MASS_BASE.ravel()).ravel()
    return rows, cols, vals


def edge_stiffness_triplets(vertices, edges, coeff):
    """Triplets of the 1D stiffness (arc-length derivative) along edges."""
    if edges.shape[0] == 0 or coeff == 0.0:
        z = np.zeros(0)
        return z.astype(np.int64), z.astype(np.int64), z
    lengths = np.linalg.norm(
        vertices[edges[:, 1]] - vertices[edges[:, 0]], axis=1
    )
    if np.any(lengths == 0.0):
        raise ValueError("zero-length fracture edge")
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    vals = np.outer(coeff / lengths, _EDGE_STIFF_BASE.ravel()).ravel()
    return rows, cols, vals


def _combine(shape, *parts):
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    return csr_from_triplets(rows, cols, vals, shape)


def assemble_mass(mesh, params):
    """Global mass: c_matrix over triangles + aperture*c_fracture along γ."""
    n = mesh.n_vertices
    return _combine(
        (n, n),
        triangle_mass_triplets(mesh.vertices, mesh.triangles, params.c_matrix),
        edge_mass_triplets(
            mesh.vertices,
            mesh.fracture_edges,
            params.aperture * params.c_fracture,
        ),
    )


def assemble_stiffness(mesh, params):
    """Global stiffness: (k_matrix/μ) grad-grad + aperture*(k_fracture/μ) on γ."""
    n = mesh.n_vertices
    return _combine(
        (n, n),
        triangle_stiffness_triplets(
            mesh.vertices, mesh.triangles, params.k_matrix / params.viscosity
        ),
        edge_stiffness_triplets(
            mesh.vertices,
            mesh.fracture_edges,
            params.aperture * params.k_fracture / params.viscosity,
        ),
    )


def unit_norm_matrices(mesh):
    """Unit-coefficient mass and stiffness over the 2D domain only.

    These define the L2 / H1-seminorm inner products used by the error
    metrics; fracture terms are deliberately excluded.
    """
    n = mesh.n_vertices
    mass = _combine(
        (n, n), triangle_mass_triplets(mesh.vertices, mesh.triangles, 1.0)
    )
    stiff = _combine(
        (n, n), triangle_stiffness_triplets(mesh.vertices, mesh.triangles, 1.0)
    )
    return mass, stiff


def penalty_coefficient(stiffness):
    """κ = 1e12 · max |diag| of the raw stiffness."""
    diag = np.abs(stiffness.diagonal())
    if diag.size == 0 or diag.max() == 0.0:
        return PENALTY_SCALE
    return PENALTY_SCALE * float(diag.max())


def apply_dirichlet_penalty(stiffness, forcing, nodes, value, kappa):
    """Return penalized copies (A + κ on Dirichlet diagonal, F + κ·value)."""
    nodes = np.asarray(nodes, dtype=np.int64)
    new_forcing = np.array(forcing, dtype=np.float64, copy=True)
    if nodes.size == 0:
        return stiffness.copy(), new_forcing
    n = stiffness.shape[0]
    bump = sp.csr_matrix(
        (np.full(nodes.size, kappa), (nodes, nodes)), shape=(n, n)
    )
    new_forcing[nodes] += kappa * value
    return (stiffness + bump).tocsr(), new_forcing


@dataclass
class FineSystem:
    """Assembled fine-grid operators of one configuration.

    stiffness carries the Dirichlet penalty; stiffness_raw does not.
    mass_unit / stiffness_unit are the norm matrices for error reporting.
    """

    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    stiffness_raw: sp.csr_matrix
    forcing: np.ndarray
    mass_unit: sp.csr_matrix
    stiffness_unit: sp.csr_matrix
    dirichlet_nodes: np.ndarray
    kappa: float


def build_fine_system(mesh, params):
    mass = assemble_mass(mesh, params)
    stiffness_raw = assemble_stiffness(mesh, params)
    nodes = dirichlet_vertices(mesh)
    kappa = penalty_coefficient(stiffness_raw)
    forcing = np.zeros(mesh.n_vertices)
    stiffness, forcing = apply_dirichlet_penalty(
        stiffness_raw, forcing, nodes, params.p_boundary, kappa
    )
    mass_unit, stiffness_unit = unit_norm_matrices(mesh)
    return FineSystem(
        mass=mass,
        stiffness=stiffness,
        stiffness_raw=stiffness_raw,
        forcing=forcing,
        mass_unit=mass_unit,
        stiffness_unit=stiffness_unit,
        dirichlet_nodes=nodes,
        kappa=kappa,
    )


def step_implicit(mass, stiffness, forcing, pressure, tau):
    """One backward-Euler step: (M + τA) p' = M p + τF."""
    lhs = (mass + tau * stiffness).tocsc()
    rhs = mass @ pressure + tau * forcing
    lu = spla.splu(lhs)
    out = lu.solve(rhs)
    if not np.all(np.isfinite(out)):
        raise RuntimeError("implicit step produced non-finite values")
    return out


def run_fine_reference(mesh, params, system=None):
    """Backward-Euler fine-grid run; the step matrix is factored once.

    Snapshot 0 is the constant initial pressure; the boundary penalty acts
    from step 1 on.
    """
    if system is None:
        system = build_fine_system(mesh, params)
    tau = params.tau
    lhs = (system.mass + tau * system.stiffness).tocsc()
    lu = spla.splu(lhs)
    n_v = mesh.n_vertices
    values = np.empty((params.n_steps + 1, n_v))
    values[0] = params.p_initial
    pressure = values[0].copy()
    for step in range(1, params.n_steps + 1):
        pressure = lu.solve(system.mass @ pressure + tau * system.forcing)
        values[step] = pressure
    times = tau * np.arange(params.n_steps + 1)
    return Trajectory(scheme="fine", times=times, values=values)

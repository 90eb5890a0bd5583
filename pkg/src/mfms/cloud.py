"""Point-cloud generation over the fine mesh.

A smoothed density field concentrates cloud nodes near fractures; a
Monte-Carlo Lloyd iteration relaxes the sample into a centroidal Voronoi
layout; support radii are scaled nearest-neighbor distances, inflated until
every fine vertex is covered and every support is edge-connected.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .fem import unit_norm_matrices
from .linalg import solve_linear

logger = logging.getLogger(__name__)


class CloudConfigError(RuntimeError):
    """The cloud cannot satisfy coverage/connectivity requirements."""


class EmptySupportError(CloudConfigError):
    """A support radius captured no complete element."""


@dataclass
class CloudParams:
    """Knobs of the cloud pipeline (defaults follow the reference setup)."""

    n_points: int = 225
    seed: int = 7
    beta: float = 5.0
    f_fracture: float = 1e5
    f_background: float = 1.0
    # sampling density is clipped to [floor, cap] x (domain mean);
    # see sample_points for why the raw density is not used directly
    density_floor: float = 1.0
    density_cap: float = 2.0
    radius_factor: float = 1.25
    lloyd_max_iters: int = 40
    lloyd_tol: float = 1e-3
    samples_per_iter: int = 0  # 0 -> 200 * n_points


@dataclass
class DensityField:
    """Nodal density, normalized so its integral over the domain is one."""

    values: np.ndarray
    scale: float  # pre-normalization integral


@dataclass
class Support:
    """Vertex/element footprint of one cloud node."""

    vertices: np.ndarray
    elements: np.ndarray


@dataclass
class PointCloud:
    points: np.ndarray  # (n, 2)
    radii: np.ndarray  # (n,)
    supports: list = field(default_factory=list)
    implicit: np.ndarray | None = None  # bool per node

    @property
    def n_points(self):
        return self.points.shape[0]


def p1_integral(mesh, values):
    """Exact integral of a piecewise-linear nodal field."""
    p = mesh.vertices[mesh.triangles]
    areas = 0.5 * np.abs(
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    return float((areas * values[mesh.triangles].mean(axis=1)).sum())


def compute_density(mesh, beta=5.0, f_fracture=1e5, f_background=1.0):
    """Solve (β K + M) ρ = M f and normalize ∫ρ = 1.

    f is f_fracture at fracture vertices and f_background elsewhere; the
    boundary condition is the natural (no-flux) one, so constants are
    reproduced exactly when there are no fractures.
    """
    mass, stiff = unit_norm_matrices(mesh)
    f = np.full(mesh.n_vertices, float(f_background))
    f[mesh.fracture_vertices()] = float(f_fracture)
    rho = solve_linear(beta * stiff + mass, mass @ f, method="direct", tol=1e-8)
    if rho.min() <= 0.0:
        raise CloudConfigError(
            f"density solve produced non-positive values (min {rho.min():.3e})"
        )
    scale = p1_integral(mesh, rho)
    return DensityField(values=rho / scale, scale=scale)


def _interpolate(mesh, values, points):
    """Piecewise-linear interpolation on the structured triangulation."""
    if mesh.lengths is None:
        raise ValueError("interpolation requires a structured mesh")
    lx, ly = mesh.lengths
    nx, ny = mesh.divisions
    hx, hy = lx / nx, ly / ny
    ix = np.clip((points[:, 0] / hx).astype(np.int64), 0, nx - 1)
    iy = np.clip((points[:, 1] / hy).astype(np.int64), 0, ny - 1)
    xi = points[:, 0] / hx - ix
    eta = points[:, 1] / hy - iy
    v00 = iy * (nx + 1) + ix
    r00 = values[v00]
    r10 = values[v00 + 1]
    r01 = values[v00 + nx + 1]
    r11 = values[v00 + nx + 2]
    lower = r00 + (r10 - r00) * xi + (r11 - r10) * eta
    upper = r00 + (r11 - r01) * xi + (r01 - r00) * eta
    return np.where(xi >= eta, lower, upper)


def _sampling_values(mesh, rho, floor_ratio, cap_ratio):
    """Clip the density into [floor, cap] x (domain mean) for sampling.

    The raw smoothed density concentrates almost all of its mass in thin
    bands along the fractures; sampled directly it starves the background
    of generators, which blows up the far-field support radii (and with
    them the local eigenproblems).  Clipping relative to the domain mean
    keeps the fracture bias while bounding the contrast; for a constant
    density the clip is a no-op.
    """
    area = p1_integral(mesh, np.ones(mesh.n_vertices))
    mean = p1_integral(mesh, rho.values) / area
    vals = rho.values
    lo = floor_ratio * mean if floor_ratio is not None else None
    hi = cap_ratio * mean if cap_ratio is not None else None
    return np.clip(vals, lo, hi)


def _rejection_sample(mesh, vals, n, rng):
    lx, ly = mesh.lengths
    vmax = float(vals.max())
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        m = max(4 * (n - filled), 256)
        cand = np.column_stack(
            [rng.uniform(0.0, lx, m), rng.uniform(0.0, ly, m)]
        )
        accept = rng.uniform(0.0, vmax, m) <= _interpolate(mesh, vals, cand)
        got = cand[accept]
        take = min(got.shape[0], n - filled)
        out[filled : filled + take] = got[:take]
        filled += take
    return out


def sample_points(rho, mesh, n, seed, floor_ratio=1.0, cap_ratio=2.0):
    """Draw n i.i.d. points from the (clipped) density by rejection.

    Proposals are uniform over the rectangle; acceptance is the ratio of
    interpolated density to its maximum.  Deterministic for a fixed seed.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    rng = np.random.default_rng(seed)
    vals = _sampling_values(mesh, rho, floor_ratio, cap_ratio)
    return _rejection_sample(mesh, vals, n, rng)


def lloyd_cvt(
    points,
    rho,
    mesh,
    max_iters=40,
    tol=1e-3,
    samples_per_iter=None,
    seed=0,
    floor_ratio=1.0,
    cap_ratio=2.0,
    on_iteration=None,
):
    """Monte-Carlo Lloyd relaxation toward a centroidal Voronoi layout.

    Each iteration draws fresh density samples, assigns them to nearest
    generators, and moves every generator to its sample mean.  A generator
    with an empty cell is re-seeded from the density.  Stops when the max
    displacement drops below tol * diam(domain) or after max_iters.

    on_iteration, if given, is called with (iteration, points, displacement,
    energy) after each sweep; energy is the mean squared sample-to-generator
    distance, a Monte-Carlo estimate of the CVT energy.
    """
    points = np.array(points, dtype=np.float64, copy=True)
    n = points.shape[0]
    if samples_per_iter is None or samples_per_iter <= 0:
        samples_per_iter = 200 * n
    rng = np.random.default_rng(seed)
    vals = _sampling_values(mesh, rho, floor_ratio, cap_ratio)
    diam = float(np.hypot(*mesh.lengths))
    for it in range(max_iters):
        samples = _rejection_sample(mesh, vals, samples_per_iter, rng)
        dist, owner = cKDTree(points).query(samples)
        energy = float(np.mean(dist**2))
        sums = np.zeros_like(points)
        counts = np.zeros(n)
        np.add.at(sums, owner, samples)
        np.add.at(counts, owner, 1.0)
        new_points = points.copy()
        occupied = counts > 0
        new_points[occupied] = sums[occupied] / counts[occupied, None]
        empty = np.flatnonzero(~occupied)
        if empty.size:
            logger.debug("lloyd: re-seeding %d empty cells", empty.size)
            new_points[empty] = _rejection_sample(mesh, vals, empty.size, rng)
        displacement = float(np.linalg.norm(new_points - points, axis=1).max())
        points = new_points
        if on_iteration is not None:
            on_iteration(it, points.copy(), displacement, energy)
        if displacement < tol * diam:
            break
    return points


def element_adjacency(mesh):
    """Sparse element-to-element graph over shared edges."""
    t = mesh.triangles
    n_t = t.shape[0]
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    owner = np.tile(np.arange(n_t), 3)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e = e[order]
    owner = owner[order]
    same = np.all(e[1:] == e[:-1], axis=1)
    a = owner[:-1][same]
    b = owner[1:][same]
    rows = np.concatenate([a, b])
    cols = np.concatenate([b, a])
    data = np.ones(rows.size, dtype=np.int8)
    return sp.csr_matrix((data, (rows, cols)), shape=(n_t, n_t))


def _ball_elements(mesh, point, radius):
    """Mask of elements whose three vertices all lie within the radius."""
    dist = np.linalg.norm(mesh.vertices - point, axis=1)
    in_ball = dist <= radius
    return in_ball[mesh.triangles].all(axis=1)


def extract_support(point, radius, mesh, adjacency=None):
    """Support of a node: edge-connected in-ball elements nearest the node.

    Raises EmptySupportError when no complete element fits in the ball
    (the signal that triggers radius repair upstream).
    """
    point = np.asarray(point, dtype=np.float64)
    mask = _ball_elements(mesh, point, radius)
    ids = np.flatnonzero(mask)
    if ids.size == 0:
        raise EmptySupportError(
            f"radius {radius:.3g} at {point} captures no element"
        )
    if adjacency is None:
        adjacency = element_adjacency(mesh)
    sub = adjacency[ids][:, ids]
    n_comp, labels = connected_components(sub, directed=False)
    if n_comp > 1:
        centroids = mesh.vertices[mesh.triangles[ids]].mean(axis=1)
        nearest = int(np.argmin(np.linalg.norm(centroids - point, axis=1)))
        ids = ids[labels == labels[nearest]]
    elements = ids
    vertices = np.unique(mesh.triangles[elements])
    return Support(vertices=vertices, elements=elements)


def compute_radii(points, mesh, zeta=1.25, growth=1.1, max_repairs=20):
    """Support radii: ζ x nearest-generator distance, repaired for coverage.

    All radii are inflated together by the growth factor until every fine
    vertex belongs to at least one support and every in-ball element set is
    non-empty and edge-connected; more than max_repairs inflations is a
    configuration error.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n == 1:
        base = np.array([float(np.hypot(*mesh.lengths))])
    else:
        dist, _ = cKDTree(points).query(points, k=2)
        base = dist[:, 1]
        if np.any(base == 0.0):
            raise CloudConfigError("coincident generators in the cloud")
    radii = zeta * base
    adjacency = element_adjacency(mesh)
    for attempt in range(max_repairs + 1):
        covered = np.zeros(mesh.n_vertices, dtype=bool)
        healthy = True
        for i in range(n):
            mask = _ball_elements(mesh, points[i], radii[i])
            ids = np.flatnonzero(mask)
            if ids.size == 0:
                healthy = False
                break
            sub = adjacency[ids][:, ids]
            n_comp, _ = connected_components(sub, directed=False)
            if n_comp > 1:
                healthy = False
                break
            covered[np.unique(mesh.triangles[ids])] = True
        if healthy and covered.all():
            if attempt:
                logger.info("radius repair: %d inflation(s) applied", attempt)
            return radii
        radii = radii * growth
    raise CloudConfigError(
        f"coverage/connectivity not reached after {max_repairs} repairs"
    )


def classify_nodes(cloud, mesh):
    """Implicit flag per node: True when its support touches a fracture."""
    frac = mesh.fracture_vertices()
    is_frac = np.zeros(mesh.n_vertices, dtype=bool)
    is_frac[frac] = True
    return np.array(
        [bool(is_frac[s.vertices].any()) for s in cloud.supports], dtype=bool
    )


def build_point_cloud(mesh, params, rho=None):
    """Full cloud pipeline: density -> sample -> Lloyd -> radii -> classify."""
    if rho is None:
        rho = compute_density(
            mesh,
            beta=params.beta,
            f_fracture=params.f_fracture,
            f_background=params.f_background,
        )
    seed_sample, seed_lloyd = np.random.SeedSequence(params.seed).spawn(2)
    pts = sample_points(
        rho,
        mesh,
        params.n_points,
        seed=seed_sample,
        floor_ratio=params.density_floor,
        cap_ratio=params.density_cap,
    )
    pts = lloyd_cvt(
        pts,
        rho,
        mesh,
        max_iters=params.lloyd_max_iters,
        tol=params.lloyd_tol,
        samples_per_iter=params.samples_per_iter or None,
        seed=seed_lloyd,
        floor_ratio=params.density_floor,
        cap_ratio=params.density_cap,
    )
    radii = compute_radii(pts, mesh, zeta=params.radius_factor)
    adjacency = element_adjacency(mesh)
    supports = [
        extract_support(pts[i], radii[i], mesh, adjacency)
        for i in range(params.n_points)
    ]
    cloud = PointCloud(points=pts, radii=radii, supports=supports)
    cloud.implicit = classify_nodes(cloud, mesh)
    return cloud

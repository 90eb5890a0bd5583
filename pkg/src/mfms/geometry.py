"""Fine-grid geometry: structured triangulation and fracture snapping.

The domain is a rectangle meshed by right triangles (each grid cell split
along its lower-left to upper-right diagonal).  Fractures come in as 2D
polylines from a small CSV format and are snapped onto chains of fine-mesh
edges, where the 1D fracture terms are later assembled.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
SIDES = ("left", "right", "bottom", "top")


class FractureFormatError(ValueError):
    """Malformed or out-of-domain fracture input."""


@dataclass
class FineMesh:
    """Conforming P1 triangle mesh of a rectangle.

    vertices      (n_v, 2) float coordinates
    triangles     (n_t, 3) vertex indices, positively oriented
    boundary_edges(n_b, 2) vertex index pairs on the outer boundary
    boundary_tags (n_b,)   'dirichlet' or 'neumann' per boundary edge
    fracture_edges(n_f, 2) fine edges carrying 1D fracture terms (deduped)
    fracture_chains        per-input-polyline vertex paths (diagnostics)

    lengths / divisions describe the structured grid when the mesh came from
    build_structured_trimesh; hand-built meshes may leave them as None.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    fracture_edges: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 2), dtype=np.int64)
    )
    fracture_chains: list = field(default_factory=list)
    lengths: tuple | None = None
    divisions: tuple | None = None

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    def fracture_vertices(self):
        """Sorted unique vertex indices touched by fracture edges."""
        if self.fracture_edges.size == 0:
            return np.zeros(0, dtype=np.int64)
        return np.unique(self.fracture_edges)

    def cell_diameter(self):
        if self.lengths is None:
            raise ValueError("cell_diameter needs a structured mesh")
        hx = self.lengths[0] / self.divisions[0]
        hy = self.lengths[1] / self.divisions[1]
        return float(np.hypot(hx, hy))


def build_structured_trimesh(lengths, nx, ny, dirichlet_side="left"):
    """Triangulate [0, lx] x [0, ly] into 2*nx*ny right triangles.

    Vertices are laid out row-major in y (index = j*(nx+1) + i).  Each cell
    is split along the diagonal from its lower-left to its upper-right
    corner.  Boundary edges on ``dirichlet_side`` are tagged 'dirichlet',
    the rest 'neumann'.
    """
    lx, ly = float(lengths[0]), float(lengths[1])
    if lx <= 0 or ly <= 0:
        raise ValueError("domain lengths must be positive")
    if nx < 1 or ny < 1:
        raise ValueError("need at least one cell per direction")
    if dirichlet_side not in SIDES:
        raise ValueError(f"dirichlet_side must be one of {SIDES}")

    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    gx, gy = np.meshgrid(xs, ys)  # shape (ny+1, nx+1)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    ii = ii.ravel()
    jj = jj.ravel()
    v00 = jj * (nx + 1) + ii
    v10 = v00 + 1
    v01 = v00 + (nx + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])  # lower-right triangle
    upper = np.column_stack([v00, v11, v01])  # upper-left triangle
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    edges = []
    tags = []

    def _add(side_name, pairs):
        tag = DIRICHLET if side_name == dirichlet_side else NEUMANN
        for pair in pairs:
            edges.append(pair)
            tags.append(tag)

    i = np.arange(nx)
    j = np.arange(ny)
    _add("bottom", np.column_stack([i, i + 1]))
    top0 = ny * (nx + 1)
    _add("top", np.column_stack([top0 + i, top0 + i + 1]))
    _add("left", np.column_stack([j * (nx + 1), (j + 1) * (nx + 1)]))
    _add("right", np.column_stack([j * (nx + 1) + nx, (j + 1) * (nx + 1) + nx]))

    return FineMesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=np.asarray(edges, dtype=np.int64),
        boundary_tags=np.asarray(tags),
        lengths=(lx, ly),
        divisions=(nx, ny),
    )


def dirichlet_vertices(mesh):
    """Unique vertex indices lying on Dirichlet-tagged boundary edges."""
    mask = mesh.boundary_tags == DIRICHLET
    if not mask.any():
        return np.zeros(0, dtype=np.int64)
    return np.unique(mesh.boundary_edges[mask])


def triangle_areas(vertices, triangles):
    """Signed areas; raises on degenerate (non-positive) triangles."""
    p = vertices[triangles]
    a = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    if np.any(a <= 0.0):
        bad = int(np.argmin(a))
        raise ValueError(f"degenerate or negatively oriented triangle {bad}")
    return a


def load_fractures(path, domain=None):
    """Read fracture polylines from CSV.

    Each non-comment line is one polyline: "x1,y1,x2,y2[,x3,y3,...]".
    Lines starting with '#' and blank lines are skipped.  With ``domain``
    = (lx, ly) given, every point must lie inside the closed rectangle.

    Returns a list of (n_pts, 2) float arrays.
    """
    polylines = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                nums = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise FractureFormatError(
                    f"{path}: line {lineno}: non-numeric token ({exc})"
                ) from exc
            if len(nums) < 4:
                raise FractureFormatError(
                    f"{path}: line {lineno}: need at least two points"
                )
            if len(nums) % 2 != 0:
                raise FractureFormatError(
                    f"{path}: line {lineno}: odd number of coordinates"
                )
            pts = np.asarray(nums, dtype=np.float64).reshape(-1, 2)
            if domain is not None:
                lx, ly = domain
                eps = 1e-9 * max(lx, ly)
                ok_x = np.all((pts[:, 0] >= -eps) & (pts[:, 0] <= lx + eps))
                ok_y = np.all((pts[:, 1] >= -eps) & (pts[:, 1] <= ly + eps))
                if not (ok_x and ok_y):
                    raise FractureFormatError(
                        f"{path}: line {lineno}: point outside "
                        f"[0,{lx}]x[0,{ly}]"
                    )
            polylines.append(pts)
    return polylines


def _point_segment_distance(points, seg_a, seg_b):
    """Distances from an array of points to one segment."""
    d = seg_b - seg_a
    denom = float(d @ d)
    if denom == 0.0:
        return np.linalg.norm(points - seg_a, axis=1)
    t = np.clip(((points - seg_a) @ d) / denom, 0.0, 1.0)
    proj = seg_a + np.outer(t, d)
    return np.linalg.norm(points - proj, axis=1)


def mesh_edges(mesh):
    """Unique undirected edges (sorted vertex pairs) of the triangulation."""
    t = mesh.triangles
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def _edge_path(adjacency, edge_ids, cost, start, goal):
    """Dijkstra over the vertex graph; returns the vertex path start..goal."""
    dist = {start: 0.0}
    prev = {}
    heap = [(0.0, start)]
    visited = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in visited:
            continue
        if u == goal:
            break
        visited.add(u)
        for v, eid in zip(adjacency[u], edge_ids[u]):
            nd = d + cost[eid]
            if nd < dist.get(v, np.inf):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if goal not in dist:
        raise ValueError("mesh edge graph is disconnected")
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    path.reverse()
    return path


def snap_fractures(mesh, polylines):
    """Snap polylines onto fine-edge chains; returns a new FineMesh.

    Endpoints snap to their nearest mesh vertices.  Between consecutive
    snapped points the chain follows the cheapest edge path, where an
    edge costs its midpoint's distance to the current segment (plus a
    tiny length term that breaks zero-distance ties toward short paths).
    Chains from all polylines are concatenated; duplicate edges are
    dropped, keeping first occurrence.
    """
    if not polylines:
        return FineMesh(
            vertices=mesh.vertices,
            triangles=mesh.triangles,
            boundary_edges=mesh.boundary_edges,
            boundary_tags=mesh.boundary_tags,
            fracture_edges=np.zeros((0, 2), dtype=np.int64),
            fracture_chains=[],
            lengths=mesh.lengths,
            divisions=mesh.divisions,
        )

    verts = mesh.vertices
    edges = mesh_edges(mesh)
    mids = 0.5 * (verts[edges[:, 0]] + verts[edges[:, 1]])
    lens = np.linalg.norm(verts[edges[:, 1]] - verts[edges[:, 0]], axis=1)

    n_v = mesh.n_vertices
    adjacency = [[] for _ in range(n_v)]
    edge_ids = [[] for _ in range(n_v)]
    for eid, (a, b) in enumerate(edges):
        adjacency[a].append(int(b))
        edge_ids[a].append(eid)
        adjacency[b].append(int(a))
        edge_ids[b].append(eid)

    chains = []
    seen = set()
    kept = []
    for pts in polylines:
        chain_vertices = []
        for seg in range(pts.shape[0] - 1):
            cost = _point_segment_distance(mids, pts[seg], pts[seg + 1])
            cost = cost + 1e-9 * lens
            start = int(np.argmin(np.linalg.norm(verts - pts[seg], axis=1)))
            goal = int(np.argmin(np.linalg.norm(verts - pts[seg + 1], axis=1)))
            if start == goal:
                continue
            path = _edge_path(adjacency, edge_ids, cost, start, goal)
            if chain_vertices and chain_vertices[-1] == path[0]:
                chain_vertices.extend(path[1:])
            else:
                chain_vertices.extend(path)
        if len(chain_vertices) < 2:
            continue
        chains.append(np.asarray(chain_vertices, dtype=np.int64))
        for a, b in zip(chain_vertices[:-1], chain_vertices[1:]):
            key = (a, b) if a < b else (b, a)
            if key not in seen:
                seen.add(key)
                kept.append(key)

    frac = (
        np.asarray(kept, dtype=np.int64)
        if kept
        else np.zeros((0, 2), dtype=np.int64)
    )
    return FineMesh(
        vertices=mesh.vertices,
        triangles=mesh.triangles,
        boundary_edges=mesh.boundary_edges,
        boundary_tags=mesh.boundary_tags,
        fracture_edges=frac,
        fracture_chains=chains,
        lengths=mesh.lengths,
        divisions=mesh.divisions,
    )


def fracture_length(mesh):
    """Total length of the snapped fracture chains (deduplicated edges)."""
    if mesh.fracture_edges.size == 0:
        return 0.0
    d = (
        mesh.vertices[mesh.fracture_edges[:, 1]]
        - mesh.vertices[mesh.fracture_edges[:, 0]]
    )
    return float(np.linalg.norm(d, axis=1).sum())

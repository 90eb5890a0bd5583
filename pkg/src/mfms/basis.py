"""Multiscale basis construction on overlapping circular supports.

Each cloud node carries a Shepard partition-of-unity weight built from a
compact cubic-spline kernel, and a handful of eigenvectors of a local
generalized eigenproblem (stiffness vs weighted mass, fracture terms
included).  Weight times eigenvector, stacked over nodes, gives the rows of
the coarse-space projection matrix.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import (
    edge_mass_triplets,
    edge_stiffness_triplets,
    triangle_mass_triplets,
    triangle_stiffness_triplets,
)
from .linalg import eig_sym_generalized

logger = logging.getLogger(__name__)


class CoverageError(RuntimeError):
    """A fine vertex is covered by no support (zero Shepard denominator)."""


def kernel_value(r):
    """Compactly supported cubic spline, C1 on [0, inf).

    Value 4/3 at r=0, 1/3 at r=1/2, 0 from r=1 on.  Accepts scalars or
    arrays.
    """
    r = np.asarray(r, dtype=np.float64)
    inner = 2.0 * (2.0 / 3.0 + 4.0 * (r - 1.0) * r * r)
    outer = (8.0 / 3.0) * (1.0 - r) ** 3
    out = np.where(r <= 0.5, inner, np.where(r < 1.0, outer, 0.0))
    if out.ndim == 0:
        return float(out)
    return out


def shepard_weights(cloud, mesh):
    """Sparse partition-of-unity matrix W (n_nodes x n_vertices).

    Row i holds kernel values of node i at its support vertices, normalized
    so every column sums to one.  A vertex outside all supports makes the
    normalization impossible and raises CoverageError.
    """
    n_nodes = cloud.n_points
    n_vertices = mesh.n_vertices
    rows = []
    cols = []
    vals = []
    colsum = np.zeros(n_vertices)
    for i, sup in enumerate(cloud.supports):
        d = np.linalg.norm(
            mesh.vertices[sup.vertices] - cloud.points[i], axis=1
        )
        w = kernel_value(d / cloud.radii[i])
        rows.append(np.full(sup.vertices.size, i, dtype=np.int64))
        cols.append(sup.vertices)
        vals.append(w)
        np.add.at(colsum, sup.vertices, w)
    uncovered = np.flatnonzero(colsum == 0.0)
    if uncovered.size:
        raise CoverageError(
            f"{uncovered.size} fine vertices are covered by no support "
            f"(first: {uncovered[:5].tolist()})"
        )
    vals = [v / colsum[c] for v, c in zip(vals, cols)]
    w = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_nodes, n_vertices),
    )
    w.sort_indices()
    return w


def partition_of_unity_error(weights):
    """max |column sum - 1| of the weight matrix."""
    return float(np.abs(np.asarray(weights.sum(axis=0)).ravel() - 1.0).max())


def local_matrices(support, mesh, lam_matrix, lam_fracture, aperture):
    """Dense local stiffness/weighted-mass pair restricted to one support.

    Both matrices carry the same coefficients (lam_matrix over triangles,
    aperture*lam_fracture along fracture edges inside the support), so the
    eigenvalues of the pencil are coefficient-contrast aware.
    """
    n_loc = support.vertices.size
    glob2loc = np.full(mesh.n_vertices, -1, dtype=np.int64)
    glob2loc[support.vertices] = np.arange(n_loc)
    local_coords = mesh.vertices[support.vertices]
    tri = glob2loc[mesh.triangles[support.elements]]

    fe = mesh.fracture_edges
    if fe.size:
        in_sup = glob2loc[fe] >= 0
        fe_local = glob2loc[fe[in_sup.all(axis=1)]]
    else:
        fe_local = np.zeros((0, 2), dtype=np.int64)

    frac_coeff = aperture * lam_fracture
    a_dense = np.zeros((n_loc, n_loc))
    b_dense = np.zeros((n_loc, n_loc))
    for target, parts in (
        (
            a_dense,
            (
                triangle_stiffness_triplets(local_coords, tri, lam_matrix),
                edge_stiffness_triplets(local_coords, fe_local, frac_coeff),
            ),
        ),
        (
            b_dense,
            (
                triangle_mass_triplets(local_coords, tri, lam_matrix),
                edge_mass_triplets(local_coords, fe_local, frac_coeff),
            ),
        ),
    ):
        for rows, cols, vals in parts:
            np.add.at(target, (rows, cols), vals)
    return a_dense, b_dense


def spectral_basis(a_loc, b_loc, n_eigen):
    """Smallest-n_eigen eigenpairs of the local pencil, sign-normalized.

    Every eigenvector gets its largest-magnitude entry made positive; the
    first one is additionally flipped so its b-weighted projection onto
    constants is positive (it is the near-constant mode).
    """
    result = eig_sym_generalized(a_loc, b_loc, n_eigen)
    vectors = result.vectors
    for k in range(vectors.shape[1]):
        v = vectors[:, k]
        if v[np.argmax(np.abs(v))] < 0.0:
            vectors[:, k] = -v
    ones = np.ones(vectors.shape[0])
    if ones @ (b_loc @ vectors[:, 0]) < 0.0:
        vectors[:, 0] = -vectors[:, 0]
    return result


def assemble_projection(weights, supports, node_vectors):
    """Stack weight-times-eigenvector rows into the projection matrix R.

    Row offsets[i] + k is (node i, eigenindex k); column support of each row
    is exactly the node's support vertex set.  Returns (R, offsets).
    """
    n_vertices = weights.shape[1]
    counts = np.array([v.shape[1] for v in node_vectors], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    rows = []
    cols = []
    vals = []
    for i, (sup, vecs) in enumerate(zip(supports, node_vectors)):
        row = weights.getrow(i)
        w = np.zeros(sup.vertices.size)
        pos = np.searchsorted(sup.vertices, row.indices)
        w[pos] = row.data
        m_i = vecs.shape[1]
        for k in range(m_i):
            rows.append(np.full(sup.vertices.size, offsets[i] + k))
            cols.append(sup.vertices)
            vals.append(w * vecs[:, k])
    r = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(int(offsets[-1]), n_vertices),
    )
    r.sort_indices()
    return r, offsets


@dataclass
class MultiscaleSpace:
    """Projection matrix plus the per-node spectral data behind it."""

    weights: sp.csr_matrix
    projection: sp.csr_matrix
    offsets: np.ndarray
    eigenvalues: list
    vectors: list
    n_eigen: int

    @property
    def n_coarse(self):
        return int(self.offsets[-1])

    def implicit_rows(self, implicit_mask):
        """Coarse row indices owned by implicit-classified nodes."""
        rows = [
            np.arange(self.offsets[i], self.offsets[i + 1])
            for i in np.flatnonzero(implicit_mask)
        ]
        if not rows:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(rows)


def build_multiscale_space(
    cloud, mesh, lam_matrix, lam_fracture, aperture, n_eigen
):
    """Solve every local eigenproblem and assemble W and R."""
    weights = shepard_weights(cloud, mesh)
    eigenvalues = []
    vectors = []
    for i, sup in enumerate(cloud.supports):
        a_loc, b_loc = local_matrices(
            sup, mesh, lam_matrix, lam_fracture, aperture
        )
        m_i = min(n_eigen, sup.vertices.size)
        if m_i < n_eigen:
            logger.info(
                "support %d has only %d vertices; taking %d eigenpairs",
                i,
                sup.vertices.size,
                m_i,
            )
        result = spectral_basis(a_loc, b_loc, m_i)
        eigenvalues.append(result.values)
        vectors.append(result.vectors)
    projection, offsets = assemble_projection(weights, cloud.supports, vectors)
    return MultiscaleSpace(
        weights=weights,
        projection=projection,
        offsets=offsets,
        eigenvalues=eigenvalues,
        vectors=vectors,
        n_eigen=n_eigen,
    )


def truncate_space(space, cloud, n_eigen):
    """Same space with only the first n_eigen eigenpairs per node."""
    vectors = [v[:, : min(n_eigen, v.shape[1])] for v in space.vectors]
    eigenvalues = [
        e[: min(n_eigen, e.size)] for e in space.eigenvalues
    ]
    projection, offsets = assemble_projection(
        space.weights, cloud.supports, vectors
    )
    return MultiscaleSpace(
        weights=space.weights,
        projection=projection,
        offsets=offsets,
        eigenvalues=eigenvalues,
        vectors=vectors,
        n_eigen=n_eigen,
    )

"""Sparse-matrix helpers shared by the assembly and solver layers.

Matrices are scipy.sparse CSR throughout.  The constructors here guarantee
canonical storage (sorted, duplicate-free column indices, finite entries),
which the rest of the code relies on.
"""

import logging

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A linear solve failed (singular factorization or residual too large)."""


class ConvergenceError(SolverError):
    """An iterative method ran out of iterations."""


def csr_from_triplets(rows, cols, values, shape):
    """Build a canonical CSR matrix from (row, col, value) triplets.

    Duplicate entries are summed.  Summation order is the input order of the
    triplets (stable lexsort + reduceat), so streams that are symmetric in
    (i, j) produce exactly symmetric matrices, with no floating-point
    asymmetry from reordering.

    Parameters
    ----------
    rows, cols : array_like of int
        Triplet coordinates.
    values : array_like of float
        Triplet values; must be finite.
    shape : tuple of int
        (n_rows, n_cols) of the result.

    Returns
    -------
    scipy.sparse.csr_matrix
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if not (rows.shape == cols.shape == values.shape):
        raise ValueError("triplet arrays must have identical shapes")
    n_rows, n_cols = shape
    if rows.size == 0:
        return sp.csr_matrix(shape)
    if rows.min() < 0 or rows.max() >= n_rows:
        raise ValueError("row index out of range")
    if cols.min() < 0 or cols.max() >= n_cols:
        raise ValueError("column index out of range")
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite value in triplets")

    # Stable sort by (row, col); equal keys keep input order, so duplicate
    # groups are summed left-to-right in the order they were emitted.
    order = np.lexsort((cols, rows))
    r, c, v = rows[order], cols[order], values[order]
    new_group = np.empty(r.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    starts = np.flatnonzero(new_group)
    data = np.add.reduceat(v, starts)
    gr = r[starts]
    gc = c[starts]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(indptr, gr + 1, 1)
    np.cumsum(indptr, out=indptr)
    out = sp.csr_matrix((data, gc, indptr), shape=shape)
    out.sort_indices()  # already sorted; makes the flag explicit
    return out


def solve_linear(a, b, method="direct", tol=1e-10, max_iter=None):
    """Solve the sparse system a @ x = b.

    method="direct" uses an LU factorization (UMFPACK-style via SuperLU);
    method="cg" uses conjugate gradients and requires a to be SPD.  The
    residual ``‖a x − b‖ ≤ tol · ‖b‖`` is enforced on exit for both paths.

    Raises
    ------
    SolverError
        Singular factorization, or direct-solve residual above tolerance.
    ConvergenceError
        CG did not reach the tolerance within ``max_iter`` iterations.
    """
    a = sp.csr_matrix(a)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if b.shape[0] != a.shape[0]:
        raise ValueError("right-hand side has wrong length")

    b_norm = float(np.linalg.norm(b))
    if method == "direct":
        try:
            lu = spla.splu(a.tocsc())
            x = lu.solve(b)
        except RuntimeError as exc:  # SuperLU signals singularity this way
            raise SolverError(f"direct solve failed: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise SolverError("direct solve produced non-finite entries")
    elif method == "cg":
        n = a.shape[0]
        if max_iter is None:
            max_iter = 10 * n
        x, info = spla.cg(a, b, rtol=tol, atol=0.0, maxiter=max_iter)
        if info > 0:
            raise ConvergenceError(
                f"cg did not converge in {max_iter} iterations"
            )
        if info < 0:
            raise SolverError(f"cg failed with code {info}")
    else:
        raise ValueError(f"unknown method {method!r}")

    residual = float(np.linalg.norm(a @ x - b))
    if residual > tol * max(b_norm, 1e-300):
        raise SolverError(
            f"solution residual {residual:.3e} exceeds {tol:.1e} * ‖b‖"
        )
    return x


class DenseEigResult:
    """Container for generalized eigenpairs (ascending eigenvalues).

    vectors[:, k] is the eigenvector for values[k]; the set is B-orthonormal.
    """

    def __init__(self, values, vectors):
        self.values = np.asarray(values, dtype=np.float64)
        self.vectors = np.asarray(vectors, dtype=np.float64)

    def __len__(self):
        return self.values.size


def eig_sym_generalized(a, b, m):
    """Smallest m eigenpairs of the dense symmetric pencil a ψ = λ b ψ.

    b must be symmetric positive definite.  Reduction to a standard
    symmetric problem happens through b's Cholesky factor (inside LAPACK),
    and the returned vectors are b-orthonormal.

    Raises
    ------
    ValueError
        Non-symmetric input (checked to 1e-12 relative), bad m.
    SolverError
        b is not SPD (Cholesky failure), or residual check fails.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or b.shape != (n, n):
        raise ValueError("matrices must be square and of equal size")
    if m < 1 or m > n:
        raise ValueError(f"m={m} outside 1..{n}")
    a_scale = np.abs(a).max() or 1.0
    b_scale = np.abs(b).max() or 1.0
    if np.abs(a - a.T).max() > 1e-12 * a_scale:
        raise ValueError("a is not symmetric")
    if np.abs(b - b.T).max() > 1e-12 * b_scale:
        raise ValueError("b is not symmetric")
    try:
        values, vectors = scipy.linalg.eigh(a, b, subset_by_index=(0, m - 1))
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise SolverError(f"b is not positive definite: {exc}") from exc

    # residual sanity: ‖aψ − λ bψ‖ small relative to the problem scale
    res = a @ vectors - b @ vectors * values[np.newaxis, :]
    scale = np.linalg.norm(a, ord="fro") + np.abs(values).max() * np.linalg.norm(
        b, ord="fro"
    )
    worst = np.abs(res).max()
    if worst > 1e-8 * max(scale, 1e-300):
        raise SolverError(f"eigen residual {worst:.3e} too large")
    return DenseEigResult(values, vectors)


def genmax_eigenvalue(a, m, tol=1e-6, max_iter=500):
    """Largest eigenvalue of the pencil a x = λ m x by power iteration.

    Iterates x ← m⁻¹ a x with a Rayleigh-quotient estimate; stops when the
    relative change drops below tol.  On non-convergence the best estimate
    is returned and a warning is logged.
    """
    a = sp.csr_matrix(a)
    m = sp.csr_matrix(m)
    n = a.shape[0]
    if n == 0:
        raise ValueError("empty matrix")
    if n == 1:
        return float(a[0, 0] / m[0, 0])
    lu = spla.splu(m.tocsc())
    rng = np.random.default_rng(1905)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for it in range(max_iter):
        y = lu.solve(a @ x)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0  # a x = 0 for the whole iteration: pencil is nilpotent
        x = y / norm
        ax = a @ x
        mx = m @ x
        lam_new = float(x @ ax) / float(x @ mx)
        if it > 0 and abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            return lam_new
        lam = lam_new
    logger.warning(
        "power iteration did not converge in %d iterations; "
        "returning approximate eigenvalue %.6e",
        max_iter,
        lam,
    )
    return lam

"""Coarse-space time stepping: fully implicit and partially explicit.

The partially explicit step treats coarse unknowns owned by fracture-touching
nodes implicitly and the rest by forward Euler:

    (M_c + tau A_c Pi_I) p' = (M_c - tau A_c Pi_E) p + tau F_c

where Pi_I / Pi_E zero the stiffness columns of the other group.  Both step
matrices are constant in time and factored once.

Dirichlet data must not reach these systems through a large penalty in A_c:
once the projection mixes a penalty column across coarse unknowns the
elimination noise (machine epsilon times the penalty) lands on the O(1)
physics and the solve returns garbage.  Instead the caller restricts the
projection so reconstructed fields vanish on the constrained set
(restrict_projection) and steps the lifted variable u = p - g, whose
boundary data is zero; A_c then stays penalty-free and well conditioned.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import Trajectory
from .linalg import genmax_eigenvalue, solve_linear


@dataclass
class CoarseSystem:
    """Projected mass/stiffness/forcing plus the implicit-row split."""

    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    forcing: np.ndarray
    tau: float
    implicit_rows: np.ndarray
    _lu_implicit: object = field(default=None, repr=False, compare=False)
    _lu_partial: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.implicit_rows = np.asarray(self.implicit_rows, dtype=np.int64)

    @property
    def n_coarse(self):
        return self.mass.shape[0]

    def explicit_rows(self):
        mask = np.ones(self.n_coarse, dtype=bool)
        mask[self.implicit_rows] = False
        return np.flatnonzero(mask)


def project_system(projection, mass, stiffness, forcing, tau,
                   implicit_rows=None):
    """Galerkin-project the fine operators onto the coarse space."""
    r = projection
    mass_c = (r @ mass @ r.T).tocsr()
    stiff_c = (r @ stiffness @ r.T).tocsr()
    forcing_c = r @ forcing
    if implicit_rows is None:
        implicit_rows = np.arange(mass_c.shape[0])
    return CoarseSystem(
        mass=mass_c,
        stiffness=stiff_c,
        forcing=forcing_c,
        tau=tau,
        implicit_rows=implicit_rows,
    )


def restrict_projection(projection, fine_nodes):
    """Zero the given fine-node columns so reconstructions vanish there.

    This is how essential boundary conditions enter the coarse space: the
    shape functions do not vanish on the boundary by themselves, so their
    traces on the constrained nodes are removed and the caller works with
    a lifted variable that is zero there.
    """
    out = projection.tocsc(copy=True)
    fine_nodes = np.asarray(fine_nodes, dtype=np.int64)
    for node in fine_nodes:
        out.data[out.indptr[node]:out.indptr[node + 1]] = 0.0
    out.eliminate_zeros()
    return out.tocsr()


def project_initial(mass, projection, fine_values, mass_coarse=None):
    """Mass-weighted coarse image of a fine field.

    Solves (R M R^T) p_c = R M p_h; pass mass_coarse to reuse an already
    projected mass matrix.
    """
    if mass_coarse is None:
        mass_coarse = (projection @ mass @ projection.T).tocsr()
    rhs = projection @ (mass @ fine_values)
    return solve_linear(mass_coarse, rhs, method="direct", tol=1e-8)


def _column_mask_matrix(n, columns):
    data = np.ones(columns.size)
    return sp.csr_matrix((data, (columns, columns)), shape=(n, n))


def step_coarse_implicit(system, p_c):
    """(M_c + tau A_c) p' = M_c p + tau F_c, factored once per system."""
    if system._lu_implicit is None:
        lhs = (system.mass + system.tau * system.stiffness).tocsc()
        system._lu_implicit = spla.splu(lhs)
    rhs = system.mass @ p_c + system.tau * system.forcing
    return system._lu_implicit.solve(rhs)


def step_coarse_partial(system, p_c):
    """Partially explicit step; implicit rows are system.implicit_rows."""
    n = system.n_coarse
    if system._lu_partial is None:
        pi_implicit = _column_mask_matrix(n, system.implicit_rows)
        lhs = (
            system.mass + system.tau * (system.stiffness @ pi_implicit)
        ).tocsc()
        try:
            system._lu_partial = spla.splu(lhs)
        except RuntimeError as exc:
            raise RuntimeError(
                f"partial step matrix is singular (tau={system.tau}, "
                f"{system.implicit_rows.size} implicit / "
                f"{system.explicit_rows().size} explicit rows): {exc}"
            ) from exc
    pi_explicit = _column_mask_matrix(n, system.explicit_rows())
    rhs = (
        system.mass @ p_c
        - system.tau * (system.stiffness @ (pi_explicit @ p_c))
        + system.tau * system.forcing
    )
    return system._lu_partial.solve(rhs)


def reconstruct_fine(projection, p_c):
    """Fine-grid image R^T p_c of a coarse vector."""
    return projection.T @ p_c


def run_coarse(system, projection, p_c0, scheme, n_steps, lift=0.0):
    """March a coarse scheme and record fine-grid reconstructions.

    scheme is 'ms_implicit', 'ms_partial', or 'ms_explicit_diag' (the
    latter is the fully explicit diagnostic: a partial step whose implicit
    set is empty).  lift is a constant added to every reconstruction, for
    callers stepping a lifted variable.
    """
    if scheme == "ms_implicit":
        stepper = step_coarse_implicit
        sys_run = system
    elif scheme == "ms_partial":
        stepper = step_coarse_partial
        sys_run = system
    elif scheme == "ms_explicit_diag":
        stepper = step_coarse_partial
        sys_run = CoarseSystem(
            mass=system.mass,
            stiffness=system.stiffness,
            forcing=system.forcing,
            tau=system.tau,
            implicit_rows=np.zeros(0, dtype=np.int64),
        )
    else:
        raise ValueError(f"unknown coarse scheme {scheme!r}")

    n_v = projection.shape[1]
    values = np.empty((n_steps + 1, n_v))
    values[0] = lift + reconstruct_fine(projection, p_c0)
    p_c = p_c0
    for step in range(1, n_steps + 1):
        p_c = stepper(sys_run, p_c)
        values[step] = lift + reconstruct_fine(projection, p_c)
    times = sys_run.tau * np.arange(n_steps + 1)
    return Trajectory(scheme=scheme, times=times, values=values)


def estimate_stable_tau(system, subset="all"):
    """Forward-Euler stability bound 2 / lambda_max(M^-1 A) on a dof subset.

    subset 'all' uses every coarse dof, 'explicit_block' only the rows not
    in implicit_rows.  An empty subset has no constraint (returns inf).
    """
    if subset == "all":
        idx = np.arange(system.n_coarse)
    elif subset == "explicit_block":
        idx = system.explicit_rows()
    else:
        raise ValueError(f"unknown subset {subset!r}")
    if idx.size == 0:
        return math.inf
    mass = system.mass[idx][:, idx]
    stiff = system.stiffness[idx][:, idx]
    lam = genmax_eigenvalue(stiff, mass)
    if lam <= 0.0:
        return math.inf
    return 2.0 / lam

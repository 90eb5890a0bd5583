"""Shared fixtures.

The reference configuration (bundled fracture set, default parameters) is
expensive to build — fine mesh, point cloud, spectral basis, 300-step
runs — so every piece of it is constructed once per session and shared by
the tests that compare schemes, sweep the fracture permeability, or check
cloud invariants.
"""

import copy

import numpy as np
import pytest

from mfms import basis, coarse, fem, harness


@pytest.fixture(scope="session")
def test1_cfg():
    """Resolved default configuration with the bundled sparse fracture set."""
    return harness.resolve_config({"run": {"fractures": "bundled:test1"}})


@pytest.fixture(scope="session")
def test1_mesh(test1_cfg):
    return harness.build_geometry(test1_cfg)


@pytest.fixture(scope="session")
def test1_mat(test1_cfg):
    return harness.material_from_config(test1_cfg)


@pytest.fixture(scope="session")
def test1_system(test1_mesh, test1_mat):
    return fem.build_fine_system(test1_mesh, test1_mat)


@pytest.fixture(scope="session")
def test1_prob(test1_cfg, test1_mesh, test1_system):
    """Cloud, spectral space and projected system at the default mode count."""
    return harness.build_coarse_problem(test1_cfg, test1_mesh, test1_system)


@pytest.fixture(scope="session")
def test1_fine(test1_mesh, test1_mat, test1_system):
    """Fine-grid reference trajectory over the full configured horizon."""
    return fem.run_fine_reference(test1_mesh, test1_mat, system=test1_system)


@pytest.fixture(scope="session")
def coarse_pair(test1_mesh, test1_mat, test1_system, test1_prob):
    """Callable n_eigen -> (implicit, partial) trajectories, cached.

    Reuses the session cloud and spectral data; smaller mode counts are
    truncations of the default space, so "same cloud, same seed"
    comparisons across n_eigen are exact.
    """
    cache = {}

    def run(n_eigen):
        if n_eigen in cache:
            return cache[n_eigen]
        space = test1_prob.space
        if n_eigen != space.n_eigen:
            space = basis.truncate_space(space, test1_prob.cloud, n_eigen)
        projection = coarse.restrict_projection(
            space.projection, test1_system.dirichlet_nodes
        )
        system_c = coarse.project_system(
            projection,
            test1_system.mass,
            test1_system.stiffness_raw,
            np.zeros(test1_mesh.n_vertices),
            test1_mat.tau,
            implicit_rows=space.implicit_rows(test1_prob.cloud.implicit),
        )
        unit = coarse.project_initial(
            test1_system.mass, space.projection, np.ones(test1_mesh.n_vertices)
        )
        u_c0 = (test1_mat.p_initial - test1_mat.p_boundary) * unit
        implicit = coarse.run_coarse(
            system_c, projection, u_c0, "ms_implicit",
            test1_mat.n_steps, lift=test1_mat.p_boundary,
        )
        partial = coarse.run_coarse(
            system_c, projection, u_c0, "ms_partial",
            test1_mat.n_steps, lift=test1_mat.p_boundary,
        )
        cache[n_eigen] = (implicit, partial)
        return cache[n_eigen]

    return run


@pytest.fixture(scope="session")
def contrast_sweep(test1_cfg, test1_mesh, test1_mat, test1_prob, coarse_pair):
    """Partially explicit runs and stable-step estimates per k_fracture.

    Maps k_fracture to a dict with the ms_partial trajectory, the stable
    explicit step over all coarse dofs and over the explicit block, and the
    weight matrix of the space built for that contrast.  The cloud is shared
    (it depends on the fracture layout, not on the permeability).
    """
    out = {}
    _, partial = coarse_pair(test1_prob.space.n_eigen)
    out[test1_mat.k_fracture] = {
        "partial": partial,
        "tau_all": coarse.estimate_stable_tau(test1_prob.system, "all"),
        "tau_explicit": coarse.estimate_stable_tau(
            test1_prob.system, "explicit_block"
        ),
        "weights": test1_prob.space.weights,
    }
    for k_fracture in (1e1, 1e5):
        cfg = copy.deepcopy(test1_cfg)
        cfg["material"]["k_fracture"] = k_fracture
        mat = harness.material_from_config(cfg)
        system = fem.build_fine_system(test1_mesh, mat)
        prob = harness.build_coarse_problem(
            cfg, test1_mesh, system, cloud=test1_prob.cloud
        )
        unit = coarse.project_initial(
            system.mass, prob.space.projection, np.ones(test1_mesh.n_vertices)
        )
        u_c0 = (mat.p_initial - mat.p_boundary) * unit
        partial = coarse.run_coarse(
            prob.system, prob.projection, u_c0, "ms_partial",
            mat.n_steps, lift=mat.p_boundary,
        )
        out[k_fracture] = {
            "partial": partial,
            "tau_all": coarse.estimate_stable_tau(prob.system, "all"),
            "tau_explicit": coarse.estimate_stable_tau(
                prob.system, "explicit_block"
            ),
            "weights": prob.space.weights,
        }
    return out

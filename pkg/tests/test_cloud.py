"""Density field, point sampling, Lloyd relaxation, supports, classification."""

import numpy as np
import pytest
from scipy.sparse.csgraph import connected_components
from scipy.stats import chi2

from mfms.cloud import (
    CloudConfigError,
    CloudParams,
    EmptySupportError,
    PointCloud,
    Support,
    build_point_cloud,
    classify_nodes,
    compute_density,
    compute_radii,
    element_adjacency,
    extract_support,
    lloyd_cvt,
    p1_integral,
    sample_points,
)
from mfms.geometry import FineMesh, build_structured_trimesh, snap_fractures


def _plain_mesh(n=16, length=80.0):
    return build_structured_trimesh((length, length), n, n)


def _fractured_mesh(n=40, length=80.0):
    # Fine enough that the fracture-weighted density solve stays positive
    # (the smoothing length sqrt(beta) must resolve at least one cell).
    mesh = build_structured_trimesh((length, length), n, n)
    seg = np.array([[0.0, length / 2], [length, length / 2]])
    return snap_fractures(mesh, [seg])


# ---------------------------------------------------------------------------
# density


class TestComputeDensity:
    def test_no_fractures_gives_uniform_density(self):
        mesh = _plain_mesh()
        rho = compute_density(mesh)
        np.testing.assert_allclose(rho.values, 1.0 / 6400.0, rtol=1e-9)

    def test_normalized_to_unit_integral(self):
        mesh = _fractured_mesh()
        rho = compute_density(mesh)
        assert p1_integral(mesh, rho.values) == pytest.approx(1.0, abs=1e-9)

    def test_density_peaks_on_a_fracture_vertex(self):
        mesh = _fractured_mesh()
        rho = compute_density(mesh)
        peak = int(np.argmax(rho.values))
        assert peak in set(mesh.fracture_vertices().tolist())

    def test_density_strictly_positive(self):
        mesh = _fractured_mesh()
        rho = compute_density(mesh)
        assert rho.values.min() > 0.0

    def test_more_smoothing_reduces_variance(self):
        mesh = _fractured_mesh()
        sharp = compute_density(mesh, beta=5.0)
        smooth = compute_density(mesh, beta=500.0)
        assert smooth.values.var() < sharp.values.var()

    def test_under_resolved_mesh_is_rejected(self):
        # At h = 5 the sqrt(beta) ~ 2.2 smoothing length is shorter than a
        # cell, the smoothed contrast source oscillates below zero and the
        # guard refuses to hand out a sign-indefinite density.
        mesh = _fractured_mesh(n=16)
        with pytest.raises(CloudConfigError):
            compute_density(mesh)


class TestP1Integral:
    def test_constant_field_integrates_to_area(self):
        mesh = _plain_mesh(n=4)
        assert p1_integral(mesh, np.ones(mesh.n_vertices)) == pytest.approx(
            6400.0, rel=1e-12
        )

    def test_linear_field_integrates_exactly(self):
        mesh = _plain_mesh(n=4)
        values = mesh.vertices[:, 0]  # f(x, y) = x
        assert p1_integral(mesh, values) == pytest.approx(
            40.0 * 6400.0, rel=1e-12
        )


# ---------------------------------------------------------------------------
# sampling


class TestSamplePoints:
    def test_deterministic_for_fixed_seed(self):
        mesh = _plain_mesh()
        rho = compute_density(mesh)
        a = sample_points(rho, mesh, 50, seed=9)
        b = sample_points(rho, mesh, 50, seed=9)
        np.testing.assert_array_equal(a, b)

    def test_seeds_produce_different_draws(self):
        mesh = _plain_mesh()
        rho = compute_density(mesh)
        a = sample_points(rho, mesh, 50, seed=9)
        b = sample_points(rho, mesh, 50, seed=10)
        assert np.abs(a - b).max() > 0.0

    def test_points_inside_the_domain(self):
        mesh = _fractured_mesh()
        rho = compute_density(mesh)
        pts = sample_points(rho, mesh, 200, seed=1)
        assert pts.shape == (200, 2)
        assert pts.min() >= 0.0
        assert pts.max() <= 80.0

    def test_uniform_density_passes_chi_square_uniformity(self):
        mesh = _plain_mesh()
        rho = compute_density(mesh)
        pts = sample_points(rho, mesh, 10_000, seed=42)
        counts, _, _ = np.histogram2d(
            pts[:, 0], pts[:, 1], bins=4, range=[[0, 80], [0, 80]]
        )
        expected = 10_000 / 16.0
        statistic = ((counts - expected) ** 2 / expected).sum()
        assert statistic < chi2.ppf(0.99, 15)

    def test_rejects_empty_request(self):
        mesh = _plain_mesh()
        rho = compute_density(mesh)
        with pytest.raises(ValueError):
            sample_points(rho, mesh, 0, seed=0)


# ---------------------------------------------------------------------------
# Lloyd relaxation


class TestLloydCvt:
    def test_single_generator_moves_to_the_centroid(self):
        mesh = _plain_mesh()
        rho = compute_density(mesh)
        start = np.array([[10.0, 12.0]])
        out = lloyd_cvt(
            start, rho, mesh, max_iters=20, samples_per_iter=50_000, seed=3
        )
        assert np.linalg.norm(out[0] - [40.0, 40.0]) <= 0.8

    def test_converged_layout_stops_after_one_sweep(self):
        mesh = _plain_mesh()
        rho = compute_density(mesh)
        start = sample_points(rho, mesh, 4, seed=2)
        settled = lloyd_cvt(
            start, rho, mesh, max_iters=40, tol=1e-3,
            samples_per_iter=400_000, seed=4,
        )
        sweeps = []
        lloyd_cvt(
            settled, rho, mesh, max_iters=10, tol=2e-3,
            samples_per_iter=400_000, seed=5,
            on_iteration=lambda *args: sweeps.append(args),
        )
        assert len(sweeps) == 1

    def test_energy_non_increasing_within_sampling_noise(self):
        mesh = _plain_mesh()
        rho = compute_density(mesh)
        start = sample_points(rho, mesh, 16, seed=6)
        energies = []
        lloyd_cvt(
            start, rho, mesh, max_iters=15, samples_per_iter=20_000, seed=7,
            on_iteration=lambda it, pts, disp, energy: energies.append(energy),
        )
        energies = np.asarray(energies)
        assert np.all(energies[1:] <= 1.02 * energies[:-1])

    def test_empty_cell_is_reseeded(self):
        mesh = _plain_mesh()
        rho = compute_density(mesh)
        start = np.array([[40.0, 40.0], [40.0, 40.0]])  # coincident: one cell empty
        out = lloyd_cvt(start, rho, mesh, max_iters=3, samples_per_iter=2_000,
                        seed=8)
        assert np.all(np.isfinite(out))
        assert np.abs(out[0] - out[1]).max() > 0.0

    def test_deterministic_for_fixed_seed(self):
        mesh = _plain_mesh()
        rho = compute_density(mesh)
        start = sample_points(rho, mesh, 9, seed=1)
        a = lloyd_cvt(start, rho, mesh, max_iters=5, seed=12)
        b = lloyd_cvt(start, rho, mesh, max_iters=5, seed=12)
        np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# radii and supports


class TestComputeRadii:
    def test_single_generator_covers_every_vertex(self):
        mesh = _plain_mesh()
        points = np.array([[30.0, 50.0]])
        radii = compute_radii(points, mesh)
        diam = np.hypot(80.0, 80.0)
        assert radii[0] == pytest.approx(1.25 * diam, rel=1e-12)
        dist = np.linalg.norm(mesh.vertices - points[0], axis=1)
        assert np.all(dist <= radii[0])

    def test_pair_of_generators_uses_mutual_distance(self):
        mesh = _plain_mesh(n=8)
        points = np.array([[20.0, 40.0], [60.0, 40.0]])
        radii = compute_radii(points, mesh)
        np.testing.assert_allclose(radii, 1.25 * 40.0, rtol=1e-12)

    def test_coincident_generators_rejected(self):
        mesh = _plain_mesh(n=4)
        points = np.array([[40.0, 40.0], [40.0, 40.0]])
        with pytest.raises(CloudConfigError):
            compute_radii(points, mesh)

    def test_repair_bound_exceeded_is_an_error(self):
        # two generators almost on top of each other on a coarse grid:
        # the initial radii capture no complete element and twenty
        # inflations cannot reach full coverage
        mesh = _plain_mesh(n=8)
        points = np.array([[40.0, 40.0], [41.0, 40.0]])
        with pytest.raises(CloudConfigError):
            compute_radii(points, mesh)


class TestExtractSupport:
    def test_huge_radius_captures_the_whole_mesh(self):
        mesh = _plain_mesh(n=4)
        sup = extract_support(np.array([37.0, 22.0]), 1e3, mesh)
        assert sup.elements.size == mesh.triangles.shape[0]
        assert sup.vertices.size == mesh.n_vertices

    def test_tiny_radius_raises(self):
        mesh = _plain_mesh(n=4)
        with pytest.raises(EmptySupportError):
            extract_support(np.array([40.0, 40.0]), 1e-3, mesh)

    def test_disconnected_ball_keeps_component_nearest_the_node(self):
        # two far-apart triangles, both inside the ball: only the island
        # containing the node's nearest element survives
        vertices = np.array(
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0],
             [10.0, 0.0], [11.0, 0.0], [10.0, 1.0]]
        )
        triangles = np.array([[0, 1, 2], [3, 4, 5]])
        mesh = FineMesh(
            vertices=vertices,
            triangles=triangles,
            boundary_edges=np.zeros((0, 2), dtype=np.int64),
            boundary_tags=np.zeros(0, dtype=object),
        )
        sup = extract_support(np.array([0.3, 0.3]), 50.0, mesh)
        np.testing.assert_array_equal(sup.elements, [0])
        np.testing.assert_array_equal(sup.vertices, [0, 1, 2])

    def test_support_vertices_are_the_element_union(self):
        mesh = _plain_mesh(n=8)
        sup = extract_support(np.array([40.0, 40.0]), 25.0, mesh)
        np.testing.assert_array_equal(
            sup.vertices, np.unique(mesh.triangles[sup.elements])
        )


# ---------------------------------------------------------------------------
# classification


class TestClassifyNodes:
    def _cloud_with_full_supports(self, mesh, n=2):
        points = np.column_stack(
            [np.linspace(20.0, 60.0, n), np.full(n, 40.0)]
        )
        supports = [extract_support(p, 1e3, mesh) for p in points]
        return PointCloud(
            points=points, radii=np.full(n, 1e3), supports=supports
        )

    def test_no_fractures_means_no_implicit_nodes(self):
        mesh = _plain_mesh(n=8)
        cloud = self._cloud_with_full_supports(mesh)
        flags = classify_nodes(cloud, mesh)
        assert not flags.any()

    def test_fracture_through_every_support_means_all_implicit(self):
        mesh = _fractured_mesh(n=8)
        cloud = self._cloud_with_full_supports(mesh)
        flags = classify_nodes(cloud, mesh)
        assert flags.all()


# ---------------------------------------------------------------------------
# full pipeline


class TestBuildPointCloud:
    PARAMS = CloudParams(n_points=16, seed=3, lloyd_max_iters=10)

    def test_coverage_and_connectivity_invariants(self):
        mesh = _fractured_mesh()
        cloud = build_point_cloud(mesh, self.PARAMS)
        covered = np.zeros(mesh.n_vertices, dtype=bool)
        adjacency = element_adjacency(mesh)
        for sup in cloud.supports:
            covered[sup.vertices] = True
            sub = adjacency[sup.elements][:, sup.elements]
            n_comp, _ = connected_components(sub, directed=False)
            assert n_comp == 1
        assert covered.all()

    def test_classification_matches_fracture_contact(self):
        mesh = _fractured_mesh()
        cloud = build_point_cloud(mesh, self.PARAMS)
        fracture = set(mesh.fracture_vertices().tolist())
        for flag, sup in zip(cloud.implicit, cloud.supports):
            touches = bool(fracture & set(sup.vertices.tolist()))
            assert bool(flag) == touches

    def test_pipeline_deterministic_for_fixed_seed(self):
        mesh = _fractured_mesh()
        a = build_point_cloud(mesh, self.PARAMS)
        b = build_point_cloud(mesh, self.PARAMS)
        np.testing.assert_array_equal(a.points, b.points)
        np.testing.assert_array_equal(a.radii, b.radii)
        np.testing.assert_array_equal(a.implicit, b.implicit)

    def test_explicit_density_field_is_honored(self):
        mesh = _plain_mesh()
        rho = compute_density(mesh)
        cloud = build_point_cloud(mesh, self.PARAMS, rho=rho)
        assert cloud.n_points == 16

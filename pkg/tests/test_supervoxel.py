"""Oversegmentation tests on planes where the right answer is geometric."""

import numpy as np
import pytest

from scenediff.core import PointCloud
from scenediff.seeds import SeedSet
from scenediff.supervoxels import (
    SupervoxelParams,
    build,
    estimate_normals,
    mark_changed,
)
from scenediff.voxelgrid import VoxelGrid


def plane_grid(z: float, extent: float = 0.5, spacing: float = 0.025) -> np.ndarray:
    ticks = np.arange(0.0, extent + spacing / 2, spacing)
    xs, ys = np.meshgrid(ticks, ticks)
    pts = np.stack([xs.ravel(), ys.ravel(), np.full(xs.size, z)], axis=1)
    return pts


def two_plane_cloud() -> PointCloud:
    # Two parallel horizontal planes 1 m apart; nothing should ever mix.
    return PointCloud(np.vstack([plane_grid(0.0), plane_grid(1.0)]))


PARAMS = SupervoxelParams(voxel_resolution=0.02, seed_resolution=0.25)


class TestEstimateNormals:
    def test_horizontal_plane(self):
        normals = estimate_normals(plane_grid(0.0))
        np.testing.assert_allclose(normals, np.tile([0.0, 0.0, 1.0], (441, 1)), atol=1e-9)

    def test_vertical_plane(self):
        pts = plane_grid(0.0)[:, [2, 0, 1]]  # remap onto the x = 0 plane
        normals = estimate_normals(pts)
        np.testing.assert_allclose(normals, np.tile([1.0, 0.0, 0.0], (441, 1)), atol=1e-9)

    def test_single_point_fallback(self):
        np.testing.assert_array_equal(estimate_normals(np.zeros((1, 3))), [[0.0, 0.0, 1.0]])

    def test_unit_length(self):
        rng = np.random.default_rng(3)
        normals = estimate_normals(rng.normal(size=(50, 3)))
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-9)


class TestParams:
    def test_seed_must_exceed_voxel(self):
        with pytest.raises(ValueError, match="seed_resolution > voxel_resolution"):
            SupervoxelParams(voxel_resolution=0.25, seed_resolution=0.25)

    def test_weights_validated(self):
        with pytest.raises(ValueError, match="weights"):
            SupervoxelParams(weight_color=-0.1)
        with pytest.raises(ValueError, match="weights"):
            SupervoxelParams(weight_color=0.0, weight_spatial=0.0, weight_normal=0.0)

    def test_iterations_validated(self):
        with pytest.raises(ValueError, match="max_iterations"):
            SupervoxelParams(max_iterations=0)


class TestBuild:
    def test_rejects_empty_cloud(self):
        with pytest.raises(ValueError, match="empty"):
            build(PointCloud(np.zeros((0, 3))))

    def test_partition_is_total(self):
        cloud = two_plane_cloud()
        graph = build(cloud, PARAMS)
        assert graph.assignment.shape == (len(cloud),)
        assert graph.assignment.min() >= 0
        assert graph.assignment.max() == graph.n_supervoxels - 1
        # Membership lists are exactly the assignment, each point once.
        gathered = np.concatenate([sv.point_indices for sv in graph.supervoxels])
        assert np.array_equal(np.sort(gathered), np.arange(len(cloud)))
        for sv in graph.supervoxels:
            assert (graph.assignment[sv.point_indices] == sv.id).all()

    def test_planes_never_mix(self):
        cloud = two_plane_cloud()
        graph = build(cloud, PARAMS)
        z = cloud.positions[:, 2]
        for sv in graph.supervoxels:
            member_z = z[sv.point_indices]
            assert member_z.min() == member_z.max()

    def test_supervoxels_are_connected(self):
        cloud = two_plane_cloud()
        graph = build(cloud, PARAMS)
        for sv in graph.supervoxels:
            grid = VoxelGrid(cloud.positions[sv.point_indices], PARAMS.voxel_resolution)
            assert grid.connected_components().max() == 0

    def test_deterministic(self):
        cloud = two_plane_cloud()
        a = build(cloud, PARAMS)
        b = build(cloud, PARAMS)
        np.testing.assert_array_equal(a.assignment, b.assignment)
        np.testing.assert_array_equal(a.edges, b.edges)

    def test_edges_stay_within_a_plane(self):
        cloud = two_plane_cloud()
        graph = build(cloud, PARAMS)
        assert len(graph.edges) > 0  # each 0.5 m plane splits into several cells
        sv_z = np.array([sv.centroid[2] for sv in graph.supervoxels])
        for a, b in graph.edges:
            assert a < b
            assert sv_z[a] == sv_z[b]  # 1 m gap cannot be voxel-adjacent

    def test_edges_unique(self):
        graph = build(two_plane_cloud(), PARAMS)
        assert len(np.unique(graph.edges, axis=0)) == len(graph.edges)

    def test_respects_seed_resolution(self):
        cloud = two_plane_cloud()
        coarse = build(cloud, SupervoxelParams(voxel_resolution=0.02, seed_resolution=0.6))
        fine = build(cloud, PARAMS)
        assert coarse.n_supervoxels < fine.n_supervoxels

    def test_sizes_match_membership(self):
        graph = build(two_plane_cloud(), PARAMS)
        np.testing.assert_array_equal(
            graph.sizes(), [len(sv.point_indices) for sv in graph.supervoxels]
        )


class TestMarkChanged:
    def test_threshold_counts_seed_points(self):
        graph = build(two_plane_cloud(), PARAMS)
        target = graph.supervoxels[0]
        assert len(target.point_indices) >= 3
        seeds = SeedSet(target.point_indices[:3].copy())
        assert mark_changed(graph, seeds, min_seed_points=3) == {0}
        assert mark_changed(graph, seeds, min_seed_points=4) == set()

    def test_multiple_supervoxels(self):
        graph = build(two_plane_cloud(), PARAMS)
        a, b = graph.supervoxels[0], graph.supervoxels[-1]
        seeds = SeedSet(np.concatenate([a.point_indices[:2], b.point_indices[:1]]))
        assert mark_changed(graph, seeds, min_seed_points=1) == {a.id, b.id}
        assert mark_changed(graph, seeds, min_seed_points=2) == {a.id}

    def test_empty_seed_set(self):
        graph = build(two_plane_cloud(), PARAMS)
        assert mark_changed(graph, SeedSet(np.empty(0, dtype=np.int64))) == set()

"""Seed detection stage tests; geometry worked out by hand."""

import numpy as np
import pytest

from scenediff.core import CameraView, DepthImage, Intrinsics, PointCloud, Pose
from scenediff.seeds import (
    ResidualImage,
    SeedSet,
    ThresholdPolicy,
    accumulate,
    backproject_seeds,
    depth_residual,
    detect_seeds,
    threshold,
)


class TestDepthResidual:
    def test_hand_case(self):
        ref = DepthImage(np.array([[1.0, 2.0], [0.0, 3.0]]))
        rescan = DepthImage(np.array([[1.5, 2.0], [1.0, 0.0]]))
        res = depth_residual(ref, rescan)
        # Bottom row has an invalid side in each pair, so it is masked out.
        assert res.valid.tolist() == [[True, True], [False, False]]
        np.testing.assert_allclose(res.residuals, [[0.5, 0.0], [0.0, 0.0]])
        assert (res.width, res.height) == (2, 2)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="differ"):
            depth_residual(DepthImage(np.ones((2, 2))), DepthImage(np.ones((2, 3))))


class TestThresholdPolicy:
    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError, match="unknown threshold mode"):
            ThresholdPolicy(mode="adaptive")

    def test_rejects_nonpositive_parameters(self):
        with pytest.raises(ValueError, match="positive"):
            ThresholdPolicy(tau_fixed=0.0)
        with pytest.raises(ValueError, match="positive"):
            ThresholdPolicy(mad_k=-1.0)


class TestThreshold:
    def test_fixed_is_strict(self):
        res = ResidualImage(
            residuals=np.array([[0.5, 0.1], [0.11, 0.0]]),
            valid=np.ones((2, 2), dtype=bool),
        )
        flagged = threshold(res, ThresholdPolicy(mode="fixed", tau_fixed=0.1))
        # Exactly tau does not trip the detector.
        assert flagged.tolist() == [[True, False], [True, False]]

    def test_fixed_ignores_invalid_pixels(self):
        res = ResidualImage(
            residuals=np.array([[0.5, 0.5]]),
            valid=np.array([[True, False]]),
        )
        flagged = threshold(res, ThresholdPolicy(mode="fixed", tau_fixed=0.1))
        assert flagged.tolist() == [[True, False]]

    def test_robust_mad_floor(self):
        # Nine identical residuals force MAD = 0, so tau falls back to
        # tau_min = 0.05 and only the 0.5 outlier is flagged.
        residuals = np.array([[0.01] * 5, [0.01] * 4 + [0.5]])
        res = ResidualImage(residuals=residuals, valid=np.ones((2, 5), dtype=bool))
        flagged = threshold(res, ThresholdPolicy(mode="robust_mad"))
        assert flagged.sum() == 1
        assert flagged[1, 4]

    def test_robust_mad_scales_with_spread(self):
        # Residuals 0.00 .. 0.10 plus one 1.0 outlier: median 0.055,
        # MAD 0.03, tau = max(0.05, 6 * 0.03) = 0.18; only 1.0 exceeds it.
        vals = np.concatenate([np.arange(11) * 0.01, [1.0]])
        res = ResidualImage(residuals=vals.reshape(1, -1), valid=np.ones((1, 12), dtype=bool))
        flagged = threshold(res, ThresholdPolicy(mode="robust_mad"))
        assert flagged.sum() == 1
        assert flagged[0, 11]

    def test_robust_mad_without_valid_pixels(self):
        res = ResidualImage(residuals=np.zeros((2, 2)), valid=np.zeros((2, 2), dtype=bool))
        flagged = threshold(res, ThresholdPolicy(mode="robust_mad"))
        assert not flagged.any()


class TestSeedSet:
    def test_indices_deduplicated_and_sorted(self):
        seeds = SeedSet(np.array([3, 1, 3, 1]))
        assert seeds.point_indices.tolist() == [1, 3]
        assert len(seeds) == 2

    def test_empty(self):
        assert len(SeedSet(np.empty(0, dtype=np.int64))) == 0


class TestBackproject:
    INTR = Intrinsics(fx=100.0, fy=100.0, cx=40.0, cy=30.0, width=81, height=61)

    def view(self):
        return CameraView(pose=Pose.identity(), intrinsics=self.INTR)

    def flagged_at(self, u, v):
        arr = np.zeros((self.INTR.height, self.INTR.width), dtype=bool)
        arr[v, u] = True
        return arr

    def depth_full(self, z):
        return DepthImage(np.full((self.INTR.height, self.INTR.width), z))

    def test_snaps_to_matching_point(self):
        # Pixel (50, 30) at depth 2 unprojects to (0.2, 0, 2).
        rescan = PointCloud(np.array([[5.0, 5.0, 5.0], [0.2, 0.0, 2.0], [-1.0, 0.0, 2.0]]))
        seeds = backproject_seeds(self.flagged_at(50, 30), self.depth_full(2.0),
                                  self.view(), rescan, view_id=7)
        assert seeds.point_indices.tolist() == [1]
        assert seeds.provenance == [(7, 50, 30, 1)]

    def test_drops_pixels_beyond_snap_radius(self):
        # Nearest point is 0.05 m away, past the 0.03 m default radius.
        rescan = PointCloud(np.array([[0.25, 0.0, 2.0]]))
        seeds = backproject_seeds(self.flagged_at(50, 30), self.depth_full(2.0),
                                  self.view(), rescan)
        assert len(seeds) == 0

    def test_ignores_invalid_rescan_depth(self):
        depth_vals = np.full((self.INTR.height, self.INTR.width), 2.0)
        depth_vals[30, 50] = 0.0
        rescan = PointCloud(np.array([[0.2, 0.0, 2.0]]))
        seeds = backproject_seeds(self.flagged_at(50, 30), DepthImage(depth_vals),
                                  self.view(), rescan)
        assert len(seeds) == 0

    def test_respects_camera_pose(self):
        # Camera shifted +1 m in world x: the same pixel now lands at x + 1.
        pose = Pose.from_rotation_translation(np.eye(3), np.array([1.0, 0.0, 0.0]))
        view = CameraView(pose=pose, intrinsics=self.INTR)
        rescan = PointCloud(np.array([[1.2, 0.0, 2.0]]))
        seeds = backproject_seeds(self.flagged_at(50, 30), self.depth_full(2.0),
                                  view, rescan)
        assert seeds.point_indices.tolist() == [0]


class TestAccumulate:
    def test_union_with_provenance(self):
        a = SeedSet(np.array([2, 5]), provenance=[(0, 1, 1, 2), (0, 3, 1, 5)])
        b = SeedSet(np.array([5, 7]), provenance=[(1, 0, 0, 5), (1, 2, 2, 7)])
        merged = accumulate([a, b])
        assert merged.point_indices.tolist() == [2, 5, 7]
        assert len(merged.provenance) == 4

    def test_empty_input(self):
        assert len(accumulate([])) == 0


class TestDetectSeeds:
    def test_micro_scene(self):
        # 2x2 image, fx = fy = 1, principal point at (0.5, 0.5). The rescan
        # brings pixel (0, 0) from depth 1.0 to 0.7; that pixel unprojects
        # to (-0.35, -0.35, 0.7), which is rescan point 0.
        intr = Intrinsics(fx=1.0, fy=1.0, cx=0.5, cy=0.5, width=2, height=2)
        view = CameraView(pose=Pose.identity(), intrinsics=intr)
        ref = DepthImage(np.ones((2, 2)))
        rescan_depth = DepthImage(np.array([[0.7, 1.0], [1.0, 1.0]]))
        rescan = PointCloud(np.array([
            [-0.35, -0.35, 0.7],
            [0.5, -0.5, 1.0],
            [-0.5, 0.5, 1.0],
            [0.5, 0.5, 1.0],
        ]))
        seeds = detect_seeds([ref], [rescan_depth], [view], rescan)
        assert seeds.point_indices.tolist() == [0]
        assert seeds.provenance == [(0, 0, 0, 0)]

    def test_views_deduplicate(self):
        intr = Intrinsics(fx=1.0, fy=1.0, cx=0.5, cy=0.5, width=2, height=2)
        view = CameraView(pose=Pose.identity(), intrinsics=intr)
        ref = DepthImage(np.ones((2, 2)))
        rescan_depth = DepthImage(np.array([[0.7, 1.0], [1.0, 1.0]]))
        rescan = PointCloud(np.array([[-0.35, -0.35, 0.7]]))
        seeds = detect_seeds([ref, ref], [rescan_depth, rescan_depth], [view, view], rescan)
        assert seeds.point_indices.tolist() == [0]
        # Both views contribute provenance even though the index merges.
        assert [row[0] for row in seeds.provenance] == [0, 1]

    def test_unchanged_scene_yields_nothing(self):
        intr = Intrinsics(fx=1.0, fy=1.0, cx=0.5, cy=0.5, width=2, height=2)
        view = CameraView(pose=Pose.identity(), intrinsics=intr)
        ref = DepthImage(np.ones((2, 2)))
        rescan = PointCloud(np.array([[-0.5, -0.5, 1.0]]))
        seeds = detect_seeds([ref], [ref], [view], rescan)
        assert len(seeds) == 0

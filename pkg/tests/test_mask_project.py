"""Mask projection tests on hand-built graphs and tiny images."""

import numpy as np
import pytest

from scenediff.core import CameraView, DepthImage, Intrinsics, LabelImage, PointCloud, Pose
from scenediff.masks import (
    MaskAssignment,
    assign_point_masks,
    assign_view_masks,
    photoconsistency_weights,
    same_mask_edges,
    supervoxel_mask,
)
from scenediff.supervoxels import Supervoxel, SupervoxelGraph


def toy_graph(assignment, edges, sv_colors=None) -> SupervoxelGraph:
    assignment = np.asarray(assignment, dtype=np.int64)
    supervoxels = []
    for s in range(assignment.max() + 1):
        idx = np.nonzero(assignment == s)[0]
        color = None if sv_colors is None else np.asarray(sv_colors[s], dtype=np.float64)
        supervoxels.append(
            Supervoxel(id=s, centroid=np.zeros(3), mean_normal=np.array([0.0, 0.0, 1.0]),
                       point_indices=idx, mean_color=color)
        )
    return SupervoxelGraph(
        assignment=assignment,
        supervoxels=supervoxels,
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
    )


INTR = Intrinsics(fx=10.0, fy=10.0, cx=2.0, cy=2.0, width=5, height=5)


def label_image() -> LabelImage:
    ids = np.zeros((5, 5), dtype=np.int64)
    ids[2, 2] = 7
    ids[2, 3] = 9
    return LabelImage(ids)


class TestAssignPointMasks:
    CLOUD = PointCloud(np.array([
        [0.0, 0.0, 1.0],   # pixel (2, 2), on-surface
        [0.1, 0.0, 1.0],   # pixel (3, 2), on-surface
        [0.0, 0.0, 2.0],   # pixel (2, 2) but 1 m behind the surface
        [1.0, 1.0, 1.0],   # projects out of bounds
        [0.0, 0.0, -1.0],  # behind the camera
    ]))
    VIEW = CameraView(pose=Pose.identity(), intrinsics=INTR)
    DEPTH = DepthImage(np.ones((5, 5)))

    def test_hand_case(self):
        masks = assign_point_masks(self.CLOUD, self.VIEW, label_image(), self.DEPTH)
        assert masks.tolist() == [7, 9, 0, 0, 0]

    def test_depth_tolerance_admits_occluded_point(self):
        masks = assign_point_masks(self.CLOUD, self.VIEW, label_image(), self.DEPTH,
                                   depth_tol=1.5)
        assert masks[2] == 7

    def test_invalid_depth_pixel_blocks_label(self):
        vals = np.ones((5, 5))
        vals[2, 2] = 0.0
        masks = assign_point_masks(self.CLOUD, self.VIEW, label_image(), DepthImage(vals))
        assert masks[0] == 0
        assert masks[1] == 9

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="differ"):
            assign_point_masks(self.CLOUD, self.VIEW,
                               LabelImage(np.zeros((4, 5), dtype=np.int64)), self.DEPTH)

    def test_all_points_invisible(self):
        cloud = PointCloud(np.array([[0.0, 0.0, -1.0]]))
        masks = assign_point_masks(cloud, self.VIEW, label_image(), self.DEPTH)
        assert masks.tolist() == [0]


class TestSupervoxelMask:
    def test_majority_vote_skips_zero(self):
        graph = toy_graph([0, 0, 0, 1, 1], edges=[[0, 1]])
        out = supervoxel_mask(graph, np.array([1, 1, 2, 0, 3]))
        # sv0: two votes for 1, one for 2; sv1: the zero is not a vote.
        assert out.tolist() == [1, 3]

    def test_tie_goes_to_smaller_label(self):
        graph = toy_graph([0, 0], edges=np.zeros((0, 2)))
        out = supervoxel_mask(graph, np.array([2, 1]))
        assert out.tolist() == [1]

    def test_unlabeled_supervoxel_stays_zero(self):
        graph = toy_graph([0, 1], edges=[[0, 1]])
        out = supervoxel_mask(graph, np.array([5, 0]))
        assert out.tolist() == [5, 0]

    def test_all_zero(self):
        graph = toy_graph([0, 1], edges=[[0, 1]])
        assert supervoxel_mask(graph, np.zeros(2, dtype=int)).tolist() == [0, 0]


class TestAssignViewMasks:
    def test_source_filtering(self):
        cloud = PointCloud(np.array([[0.0, 0.0, 1.0]]))
        graph = toy_graph([0], edges=np.zeros((0, 2)))
        with_labels = CameraView(pose=Pose.identity(), intrinsics=INTR,
                                 labels={"oracle": label_image()})
        without = CameraView(pose=Pose.identity(), intrinsics=INTR)
        depths = [DepthImage(np.ones((5, 5)))] * 2
        assignment = assign_view_masks(cloud, [with_labels, without], graph, depths, "oracle")
        assert assignment.source == "oracle"
        assert set(assignment.per_view) == {0}
        assert assignment.per_view[0].tolist() == [7]


class TestSameMaskEdges:
    def test_or_combines_views_and_sources(self):
        graph = toy_graph([0, 1, 2], edges=[[0, 1], [1, 2]])
        first = MaskAssignment(source="a", per_view={0: np.array([1, 1, 0])})
        second = MaskAssignment(source="b", per_view={0: np.array([0, 2, 2])})
        assert same_mask_edges(graph, [first]).values.tolist() == [1.0, 0.0]
        assert same_mask_edges(graph, [first, second]).values.tolist() == [1.0, 1.0]

    def test_zero_label_never_links(self):
        graph = toy_graph([0, 1], edges=[[0, 1]])
        assignment = MaskAssignment(source="a", per_view={0: np.array([0, 0])})
        assert same_mask_edges(graph, [assignment]).values.tolist() == [0.0]

    def test_differing_labels_do_not_link(self):
        graph = toy_graph([0, 1], edges=[[0, 1]])
        assignment = MaskAssignment(source="a", per_view={0: np.array([1, 2])})
        assert same_mask_edges(graph, [assignment]).values.tolist() == [0.0]

    def test_requires_some_view(self):
        graph = toy_graph([0, 1], edges=[[0, 1]])
        with pytest.raises(ValueError, match="at least one view"):
            same_mask_edges(graph, [MaskAssignment(source="a")])


class TestPhotoconsistency:
    def test_hand_value(self):
        graph = toy_graph([0, 1], edges=[[0, 1]],
                          sv_colors=[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        weights = photoconsistency_weights(graph, gamma=2.0)
        # ||c0 - c1||^2 = 1, so w = 2 / (1 + 1) = 1.
        assert weights.values.tolist() == [1.0]
        assert weights.mode == "photoconsistency"

    def test_identical_colors_give_gamma(self):
        graph = toy_graph([0, 1], edges=[[0, 1]],
                          sv_colors=[[0.3, 0.3, 0.3], [0.3, 0.3, 0.3]])
        assert photoconsistency_weights(graph, gamma=0.7).values.tolist() == [0.7]

    def test_requires_colors(self):
        graph = toy_graph([0, 1], edges=[[0, 1]])
        with pytest.raises(ValueError, match="colors"):
            photoconsistency_weights(graph)

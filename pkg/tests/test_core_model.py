"""Geometry and image primitive tests; expected values computed by hand."""

import numpy as np
import pytest

from scenediff.core import (
    CameraView,
    DepthImage,
    Intrinsics,
    LabelImage,
    PointCloud,
    Pose,
    TriMesh,
    project,
    project_points,
    unproject,
    unproject_pixels,
)

INTR = Intrinsics(fx=100.0, fy=100.0, cx=50.0, cy=40.0, width=101, height=81)


class TestIntrinsics:
    def test_matrix_layout(self):
        m = INTR.matrix()
        assert m.tolist() == [[100.0, 0.0, 50.0], [0.0, 100.0, 40.0], [0.0, 0.0, 1.0]]

    def test_focal_must_be_positive(self):
        with pytest.raises(ValueError, match="focal"):
            Intrinsics(fx=0.0, fy=1.0, cx=0.0, cy=0.0, width=10, height=10)

    def test_principal_point_inside_image(self):
        with pytest.raises(ValueError, match="cx"):
            Intrinsics(fx=1.0, fy=1.0, cx=10.0, cy=0.0, width=10, height=10)


class TestProjection:
    def test_center_pixel(self):
        # Optical-axis point lands on the principal point.
        assert project(np.array([0.0, 0.0, 2.0]), INTR) == (50.0, 40.0, 2.0)

    def test_off_center(self):
        # u = 100 * 0.5 / 2 + 50 = 75, v = 100 * (-0.2) / 2 + 40 = 30.
        u, v, z = project(np.array([0.5, -0.2, 2.0]), INTR)
        assert (u, v, z) == (75.0, 30.0, 2.0)

    def test_behind_camera_is_invisible(self):
        assert project(np.array([0.0, 0.0, -1.0]), INTR) is None
        assert project(np.array([0.0, 0.0, 0.0]), INTR) is None

    def test_outside_bounds_is_invisible(self):
        # u = 100 * 2 / 1 + 50 = 250 > width - 1.
        assert project(np.array([2.0, 0.0, 1.0]), INTR) is None

    def test_vectorized_agrees_with_scalar(self):
        pts = np.array([
            [0.0, 0.0, 2.0],
            [0.5, -0.2, 2.0],
            [0.0, 0.0, -1.0],
            [2.0, 0.0, 1.0],
        ])
        u, v, z, valid = project_points(pts, INTR)
        assert valid.tolist() == [True, True, False, False]
        assert u[0] == 50.0 and v[0] == 40.0
        assert u[1] == 75.0 and v[1] == 30.0

    def test_unproject_inverts_project(self):
        pt = np.array([0.3, -0.1, 1.7])
        u, v, z = project(pt, INTR)
        np.testing.assert_allclose(unproject(u, v, z, INTR), pt, atol=1e-12)

    def test_unproject_rejects_nonpositive_depth(self):
        with pytest.raises(ValueError, match="depth"):
            unproject(50.0, 40.0, 0.0, INTR)

    def test_unproject_pixels_matches_scalar(self):
        out = unproject_pixels(np.array([75.0]), np.array([30.0]), np.array([2.0]), INTR)
        np.testing.assert_allclose(out, [[0.5, -0.2, 2.0]], atol=1e-12)


class TestPose:
    def test_identity_roundtrip(self):
        pose = Pose.identity()
        pt = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(pose.camera_to_world(pt), pt)
        np.testing.assert_allclose(pose.world_to_camera(pt), pt)

    def test_world_to_camera_inverts_camera_to_world(self):
        angle = 0.7
        rot = np.array([
            [np.cos(angle), -np.sin(angle), 0.0],
            [np.sin(angle), np.cos(angle), 0.0],
            [0.0, 0.0, 1.0],
        ])
        pose = Pose.from_rotation_translation(rot, np.array([1.0, -2.0, 0.5]))
        pts = np.array([[0.0, 0.0, 1.0], [3.0, 1.0, -4.0]])
        np.testing.assert_allclose(pose.world_to_camera(pose.camera_to_world(pts)), pts, atol=1e-12)

    def test_inverse_composes_to_identity(self):
        rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        pose = Pose.from_rotation_translation(rot, np.array([2.0, 0.0, 1.0]))
        ident = pose.compose(pose.inverse()).matrix
        np.testing.assert_allclose(ident, np.eye(4), atol=1e-12)

    def test_translation_extraction(self):
        pose = Pose.from_rotation_translation(np.eye(3), np.array([4.0, 5.0, 6.0]))
        assert pose.translation.tolist() == [4.0, 5.0, 6.0]

    def test_rejects_non_orthonormal(self):
        bad = np.eye(4)
        bad[0, 0] = 2.0
        with pytest.raises(ValueError, match="orthonormal"):
            Pose(bad)

    def test_rejects_reflection(self):
        bad = np.eye(4)
        bad[0, 0] = -1.0
        with pytest.raises(ValueError, match="det"):
            Pose(bad)

    def test_rejects_bad_last_row(self):
        bad = np.eye(4)
        bad[3, 0] = 0.1
        with pytest.raises(ValueError, match="last row"):
            Pose(bad)

    def test_matrix_is_frozen(self):
        pose = Pose.identity()
        with pytest.raises(ValueError):
            pose.matrix[0, 0] = 7.0


class TestDepthImage:
    def test_valid_mask(self):
        d = DepthImage(np.array([[0.0, 1.5], [2.0, 0.0]]))
        assert d.valid().tolist() == [[False, True], [True, False]]
        assert (d.width, d.height) == (2, 2)

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="negative"):
            DepthImage(np.array([[-1.0]]))

    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="finite"):
            DepthImage(np.array([[np.nan]]))

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError, match="2-D"):
            DepthImage(np.zeros(4))


class TestLabelImage:
    def test_holds_ids(self):
        lab = LabelImage(np.array([[0, 3], [2, 0]]))
        assert lab.ids.dtype == np.int32
        assert (lab.width, lab.height) == (2, 2)

    def test_rejects_negative_ids(self):
        with pytest.raises(ValueError, match="16 bits"):
            LabelImage(np.array([[-1]]))

    def test_rejects_wide_ids(self):
        with pytest.raises(ValueError, match="16 bits"):
            LabelImage(np.array([[0x10000]]))

    def test_rejects_float_dtype(self):
        with pytest.raises(ValueError, match="integer"):
            LabelImage(np.array([[1.5]]))


class TestPointCloud:
    def test_len_and_reshape(self):
        cloud = PointCloud(np.arange(6.0))
        assert len(cloud) == 2
        assert cloud.positions.shape == (2, 3)

    def test_color_range_checked(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            PointCloud(np.zeros((1, 3)), colors=np.array([[1.5, 0.0, 0.0]]))

    def test_channel_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            PointCloud(np.zeros((2, 3)), colors=np.zeros((1, 3)))

    def test_normals_must_be_unit(self):
        with pytest.raises(ValueError, match="unit"):
            PointCloud(np.zeros((1, 3)), normals=np.array([[2.0, 0.0, 0.0]]))

    def test_instance_ids_non_negative(self):
        with pytest.raises(ValueError, match="non-negative"):
            PointCloud(np.zeros((1, 3)), instance_ids=np.array([-1]))


class TestTriMesh:
    def test_degenerate_faces_dropped(self):
        verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        faces = np.array([[0, 1, 2], [0, 1, 1]])
        mesh = TriMesh(verts, faces)
        assert len(mesh.faces) == 1
        assert mesh.n_degenerate == 1

    def test_face_index_bounds(self):
        verts = np.zeros((2, 3))
        with pytest.raises(ValueError, match="out of range"):
            TriMesh(verts, np.array([[0, 1, 2]]))


class TestCameraView:
    def test_rejects_mismatched_depth(self):
        with pytest.raises(ValueError, match="depth"):
            CameraView(pose=Pose.identity(), intrinsics=INTR,
                       depth=DepthImage(np.zeros((2, 2))))

    def test_rejects_mismatched_labels(self):
        with pytest.raises(ValueError, match="label"):
            CameraView(pose=Pose.identity(), intrinsics=INTR,
                       labels={"oracle": LabelImage(np.zeros((2, 2), dtype=np.int64))})

    def test_accepts_matching_images(self):
        depth = DepthImage(np.ones((INTR.height, INTR.width)))
        view = CameraView(pose=Pose.identity(), intrinsics=INTR, depth=depth)
        assert view.depth is depth

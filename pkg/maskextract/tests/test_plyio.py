import numpy as np
import pytest

from maskextract import Cloud, read_cloud, write_cloud


def _sample_cloud():
    positions = np.array([[0.0, 0.5, 1.0], [2.0, -1.0, 0.25], [3.5, 3.5, 3.5]])
    colors = np.array([[255, 0, 0], [0, 255, 0], [0, 0, 255]], dtype=np.uint8)
    normals = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return Cloud(positions, colors=colors, normals=normals,
                 instance_ids=np.array([0, 7, 7]))


class TestRoundtrip:
    def test_binary_roundtrip(self, tmp_path):
        cloud = _sample_cloud()
        write_cloud(tmp_path / "c.ply", cloud)
        back = read_cloud(tmp_path / "c.ply")
        assert np.array_equal(back.positions, cloud.positions)
        assert np.array_equal(back.colors, cloud.colors)
        assert np.array_equal(back.normals, cloud.normals)
        assert np.array_equal(back.instance_ids, cloud.instance_ids)

    def test_positions_only(self, tmp_path):
        cloud = Cloud(np.array([[1.0, 2.0, 3.0]]))
        write_cloud(tmp_path / "p.ply", cloud)
        back = read_cloud(tmp_path / "p.ply")
        assert len(back) == 1
        assert back.colors is None
        assert back.normals is None
        assert back.instance_ids is None


class TestAsciiRead:
    def test_ascii_vertex_list(self, tmp_path):
        path = tmp_path / "a.ply"
        path.write_bytes(
            b"ply\nformat ascii 1.0\ncomment hand written\n"
            b"element vertex 2\n"
            b"property double x\nproperty double y\nproperty double z\n"
            b"property uint instance_id\n"
            b"end_header\n"
            b"0 0 0 3\n"
            b"1.5 2.5 -4 9\n")
        cloud = read_cloud(path)
        assert np.array_equal(cloud.positions, [[0, 0, 0], [1.5, 2.5, -4]])
        assert cloud.instance_ids.tolist() == [3, 9]

    def test_extra_scalar_properties_ignored(self, tmp_path):
        path = tmp_path / "e.ply"
        path.write_bytes(
            b"ply\nformat ascii 1.0\nelement vertex 1\n"
            b"property float x\nproperty float y\nproperty float z\n"
            b"property float curvature\n"
            b"end_header\n"
            b"1 2 3 0.5\n")
        cloud = read_cloud(path)
        assert cloud.positions.tolist() == [[1.0, 2.0, 3.0]]


class TestValidation:
    def test_not_a_ply(self, tmp_path):
        (tmp_path / "x.ply").write_bytes(b"OFF\n3 0 0\n")
        with pytest.raises(ValueError, match="magic"):
            read_cloud(tmp_path / "x.ply")

    def test_missing_coordinate_property(self, tmp_path):
        path = tmp_path / "m.ply"
        path.write_bytes(
            b"ply\nformat ascii 1.0\nelement vertex 1\n"
            b"property double x\nproperty double y\n"
            b"end_header\n1 2\n")
        with pytest.raises(ValueError, match="'z'"):
            read_cloud(path)

    def test_list_property_in_vertex_rejected(self, tmp_path):
        path = tmp_path / "l.ply"
        path.write_bytes(
            b"ply\nformat ascii 1.0\nelement vertex 1\n"
            b"property list uchar int vertex_indices\n"
            b"end_header\n0\n")
        with pytest.raises(ValueError, match="list"):
            read_cloud(path)

    def test_negative_instance_ids_rejected_on_write(self, tmp_path):
        cloud = Cloud(np.zeros((1, 3)), instance_ids=np.array([-1]))
        with pytest.raises(ValueError, match="non-negative"):
            write_cloud(tmp_path / "n.ply", cloud)

    def test_shape_validation(self):
        with pytest.raises(ValueError, match=r"\(n, 3\)"):
            Cloud(np.zeros((4, 2)))
        with pytest.raises(ValueError, match="colors"):
            Cloud(np.zeros((4, 3)), colors=np.zeros((3, 3), dtype=np.uint8))

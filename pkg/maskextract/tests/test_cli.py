import json

from click.testing import CliRunner

from maskextract.cli import main


class TestExtractCommand:
    def test_regions_backend_end_to_end(self, image_dir, tmp_path):
        out = tmp_path / "masks"
        result = CliRunner().invoke(main, [
            "extract", "--images", str(image_dir), "--source", "both",
            "--out", str(out), "--backend", "regions"])
        assert result.exit_code == 0, result.output
        assert "color: 2 label maps" in result.output
        assert "depth: 2 label maps" in result.output
        with open(out / "label_paths.json") as handle:
            patch = json.load(handle)["label_paths"]
        for rel in patch["color"].values():
            assert (out / rel).is_file()

    def test_sam_without_weights_is_usage_error(self, image_dir, tmp_path):
        result = CliRunner().invoke(main, [
            "extract", "--images", str(image_dir), "--out", str(tmp_path / "m")])
        assert result.exit_code == 2
        assert "sam" in result.output or "weights" in result.output

    def test_unknown_source_rejected_by_parser(self, image_dir, tmp_path):
        result = CliRunner().invoke(main, [
            "extract", "--images", str(image_dir), "--source", "lidar",
            "--out", str(tmp_path / "m"), "--backend", "regions"])
        assert result.exit_code == 2

    def test_missing_images_fail_at_runtime(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        result = CliRunner().invoke(main, [
            "extract", "--images", str(empty), "--out", str(tmp_path / "m"),
            "--backend", "regions"])
        assert result.exit_code == 1
        assert "no color images" in result.output


class TestConvertCommand:
    def test_convert_end_to_end(self, rscan_scene, tmp_path):
        out = tmp_path / "converted"
        result = CliRunner().invoke(main, [
            "convert-3rscan", "--scene", str(rscan_scene), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert str(out / "manifest.json") in result.output
        assert (out / "manifest.json").is_file()
        assert (out / "gt.json").is_file()

    def test_nonexistent_scene_rejected_by_parser(self, tmp_path):
        result = CliRunner().invoke(main, [
            "convert-3rscan", "--scene", str(tmp_path / "nope"),
            "--out", str(tmp_path / "o")])
        assert result.exit_code == 2

    def test_broken_scene_fails_at_runtime(self, rscan_scene, tmp_path):
        seq = rscan_scene / "rescan" / "sequence"
        (seq / "frame-000000.pose.txt").write_text("junk\n")
        result = CliRunner().invoke(main, [
            "convert-3rscan", "--scene", str(rscan_scene),
            "--out", str(tmp_path / "o")])
        assert result.exit_code == 1
        assert "error:" in result.output

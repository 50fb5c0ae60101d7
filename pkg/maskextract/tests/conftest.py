import json

import numpy as np
import pytest
from PIL import Image

from maskextract import Cloud, write_cloud


@pytest.fixture()
def image_dir(tmp_path):
    """Engine-style scene directory with color/ and depth/ subdirectories."""
    scene = tmp_path / "scene"
    (scene / "color").mkdir(parents=True)
    (scene / "depth").mkdir(parents=True)
    for i in range(2):
        img = np.zeros((24, 32, 3), dtype=np.uint8)
        img[:12, :] = (230, 20, 20)
        img[12:, 16:] = (240, 240, 240)
        Image.fromarray(img).save(scene / "color" / f"view_{i:03d}.png")
        depth = np.full((24, 32), 1500, dtype=np.uint16)
        depth[6:18, 8:24] = 900
        Image.fromarray(depth).save(scene / "depth" / f"view_{i:03d}.png")
    return scene


def _cloud(rng, instance_ids):
    n = len(instance_ids)
    return Cloud(
        rng.random((n, 3)) * 2.0,
        colors=(rng.random((n, 3)) * 255).astype(np.uint8),
        normals=np.tile([0.0, 0.0, 1.0], (n, 1)),
        instance_ids=np.asarray(instance_ids),
    )


ROT_Z90 = np.array([
    [0.0, -1.0, 0.0, 0.25],
    [1.0, 0.0, 0.0, -0.5],
    [0.0, 0.0, 1.0, 1.5],
    [0.0, 0.0, 0.0, 1.0],
])


@pytest.fixture()
def rscan_scene(tmp_path):
    """Fake 3RScan-style scene: clouds, a two-frame sequence, changes.json.

    Rescan instance ids: 0 (40 pts), 1 (30 pts), 4 (30 pts); reference has
    2 instead of 4. changes.json marks 1 moved, 4 added, 2 removed.
    """
    scene = tmp_path / "3rscan"
    rng = np.random.default_rng(5)
    write_cloud(scene / "reference" / "labels.instances.ply",
                _cloud(rng, [0] * 40 + [1] * 30 + [2] * 30))
    write_cloud(scene / "rescan" / "labels.instances.ply",
                _cloud(rng, [0] * 40 + [1] * 30 + [4] * 30))
    seq = scene / "rescan" / "sequence"
    seq.mkdir(parents=True)
    (seq / "_info.txt").write_text(
        "m_versionNumber = 4\n"
        "m_colorWidth = 32\nm_colorHeight = 24\n"
        "m_depthWidth = 32\nm_depthHeight = 24\n"
        "m_depthShift = 1000\n"
        "m_calibrationDepthIntrinsic = 28 0 15.5 0 0 28 11.5 0 0 0 1 0 0 0 0 1\n")
    for i, pose in enumerate((np.eye(4), ROT_Z90)):
        np.savetxt(seq / f"frame-{i:06d}.pose.txt", pose)
        depth = (rng.random((24, 32)) * 3000).astype(np.uint16)
        Image.fromarray(depth).save(seq / f"frame-{i:06d}.depth.png")
        color = (rng.random((24, 32, 3)) * 255).astype(np.uint8)
        Image.fromarray(color).save(seq / f"frame-{i:06d}.color.jpg")
    (scene / "changes.json").write_text(
        json.dumps({"moved": [1], "removed": [2], "added": [4]}))
    return scene

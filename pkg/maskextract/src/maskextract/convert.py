"""Conversion of 3RScan-style scene directories to engine manifests.

Expected input layout:

    scene_dir/
        reference/labels.instances.ply    instance-annotated reference scan
        rescan/labels.instances.ply       instance-annotated rescan
        rescan/sequence/_info.txt         camera calibration (key = value)
        rescan/sequence/frame-XXXXXX.pose.txt    4x4 camera-to-world
        rescan/sequence/frame-XXXXXX.depth.png   16-bit depth (or .pgm)
        rescan/sequence/frame-XXXXXX.color.png   optional color (or .jpg)
        changes.json                      {"moved": [...], "removed": [...],
                                           "added": [...]} instance ids

The output directory gets rewritten clouds, poses, depths, optional color
frames, gt.json when change annotations exist, and manifest.json tying it
together. Depth is renormalized to millimeters (manifest depth_scale
0.001) regardless of the sequence's native depth shift.
"""

from __future__ import annotations

import json
import re
import warnings
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from PIL import Image

from . import labelmaps, plyio

_FRAME_RE = re.compile(r"^(frame-\d+)\.pose\.txt$")


def _parse_info(path: Path) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for line in path.read_text().splitlines():
        if "=" not in line:
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _intrinsics_from_info(info: Dict[str, str]) -> Dict[str, float]:
    width = info.get("m_depthWidth", info.get("m_colorWidth"))
    height = info.get("m_depthHeight", info.get("m_colorHeight"))
    matrix = info.get("m_calibrationDepthIntrinsic", info.get("m_calibrationColorIntrinsic"))
    if width is None or height is None or matrix is None:
        raise ValueError("_info.txt lacks image size or calibration entries")
    m = [float(v) for v in matrix.split()]
    if len(m) != 16:
        raise ValueError("calibration entry must hold a row-major 4x4 matrix (16 values)")
    return {
        "fx": m[0],
        "fy": m[5],
        "cx": m[2],
        "cy": m[6],
        "width": int(width),
        "height": int(height),
    }


def _load_pose(path: Path) -> np.ndarray:
    pose = np.loadtxt(path, dtype=np.float64)
    if pose.shape != (4, 4):
        raise ValueError(f"{path}: pose must be a 4x4 matrix")
    return pose


def _write_pose(path: Path, pose: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [" ".join("%.17g" % v for v in row) for row in pose]
    path.write_text("\n".join(lines) + "\n")


def _convert_depth(src: Path, dst: Path, depth_shift: float) -> None:
    depth = labelmaps.load_image16(src).astype(np.float64)
    if depth_shift != 1000.0:
        depth = np.rint(depth / depth_shift * 1000.0)
        if depth.max(initial=0.0) > 0xFFFF:
            raise ValueError(f"{src}: depth exceeds 16-bit range after rescaling")
    dst.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(depth.astype(np.uint16)).save(dst)


def _find_frame_file(seq: Path, stem: str, kind: str, suffixes) -> Optional[Path]:
    for suffix in suffixes:
        candidate = seq / f"{stem}.{kind}{suffix}"
        if candidate.is_file():
            return candidate
    return None


def _ground_truth(cloud: plyio.Cloud, annotation: dict) -> dict:
    if cloud.instance_ids is None:
        raise ValueError("rescan cloud has no instance ids; cannot build ground truth")
    changed = []
    for iid in sorted(set(annotation.get("moved", [])) | set(annotation.get("added", []))):
        indices = np.nonzero(cloud.instance_ids == iid)[0]
        if len(indices) == 0:
            warnings.warn(f"changed instance {iid} has no points in the rescan; skipped")
            continue
        changed.append({"instance_id": int(iid), "point_indices": indices.tolist()})
    return {
        "changed_instances": changed,
        "removed_instance_ids": sorted(int(i) for i in annotation.get("removed", [])),
    }


def convert_3rscan(scene_dir, out_dir) -> Path:
    """Convert one scene directory; returns the path of the new manifest."""
    scene_dir = Path(scene_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    reference = plyio.read_cloud(scene_dir / "reference" / "labels.instances.ply")
    rescan = plyio.read_cloud(scene_dir / "rescan" / "labels.instances.ply")
    plyio.write_cloud(out_dir / "reference.ply", reference)
    plyio.write_cloud(out_dir / "rescan.ply", rescan)

    seq = scene_dir / "rescan" / "sequence"
    info = _parse_info(seq / "_info.txt")
    intrinsics = _intrinsics_from_info(info)
    depth_shift = float(info.get("m_depthShift", 1000.0))

    stems = sorted(m.group(1) for f in seq.iterdir() if (m := _FRAME_RE.match(f.name)))
    if not stems:
        raise FileNotFoundError(f"no frame-*.pose.txt files under {seq}")
    views = []
    for stem in stems:
        pose = _load_pose(seq / f"{stem}.pose.txt")
        _write_pose(out_dir / "poses" / f"{stem}.txt", pose)
        view = {
            "pose_path": f"poses/{stem}.txt",
            "intrinsics": intrinsics,
            "label_paths": {},
        }
        depth_src = _find_frame_file(seq, stem, "depth", (".png", ".pgm"))
        if depth_src is not None:
            _convert_depth(depth_src, out_dir / "depth" / f"{stem}.png", depth_shift)
            view["depth_path"] = f"depth/{stem}.png"
        color_src = _find_frame_file(seq, stem, "color", (".png", ".jpg", ".jpeg"))
        if color_src is not None:
            color = labelmaps.load_color(color_src)
            (out_dir / "color").mkdir(parents=True, exist_ok=True)
            Image.fromarray(color).save(out_dir / "color" / f"{stem}.png")
            view["color_path"] = f"color/{stem}.png"
        views.append(view)

    manifest = {
        "reference_scan": "reference.ply",
        "rescan": "rescan.ply",
        "depth_scale": 0.001,
        "views": views,
    }
    changes_path = scene_dir / "changes.json"
    if changes_path.is_file():
        with open(changes_path) as handle:
            annotation = json.load(handle)
        gt = _ground_truth(rescan, annotation)
        with open(out_dir / "gt.json", "w") as handle:
            json.dump(gt, handle)
            handle.write("\n")
        manifest["ground_truth"] = "gt.json"
    else:
        warnings.warn(f"no changes.json in {scene_dir}; manifest written without ground truth")

    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as handle:
        json.dump(manifest, handle, indent=2)
        handle.write("\n")
    return manifest_path

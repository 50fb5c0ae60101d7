"""Scene deserialization and result serialization.

File formats:

- Point clouds / meshes: PLY, ASCII or binary little-endian, vertex
  properties x, y, z [, red, green, blue] [, nx, ny, nz] [, instance_id].
- Poses: plain-text 4x4 row-major camera-to-world matrices.
- Depth and label images: 16-bit single-channel PNG.  Depth pixels are
  value * depth_scale meters (default scale 0.001, i.e. millimeters);
  0 stays the invalid sentinel.
- Scene manifest, ground truth, detections: JSON.

Loading never reorders points; ground-truth indices depend on file order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from PIL import Image

from .core import CameraView, DepthImage, Intrinsics, LabelImage, PointCloud, Pose, TriMesh

DEFAULT_DEPTH_SCALE = 0.001

_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class PlyFormatError(ValueError):
    pass


def _parse_ply_header(raw: bytes, path):
    """Returns (format, elements, body_offset); elements are (name, count, [(prop, dtype)]).

    List properties are recorded as ("list", count_dtype, value_dtype, name).
    """
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise PlyFormatError(f"{path}: not a PLY file (no header)")
    end = raw.index(b"\n", end) + 1
    header = raw[:end].decode("ascii", errors="replace")
    fmt = None
    elements = []
    for line in header.splitlines():
        tokens = line.strip().split()
        if not tokens or tokens[0] in ("ply", "comment", "obj_info", "end_header"):
            continue
        if tokens[0] == "format":
            if tokens[1] not in ("ascii", "binary_little_endian"):
                raise PlyFormatError(f"{path}: unsupported PLY format '{tokens[1]}'")
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise PlyFormatError(f"{path}: property before any element")
            if tokens[1] == "list":
                elements[-1][2].append(("list", _PLY_DTYPES[tokens[2]], _PLY_DTYPES[tokens[3]], tokens[4]))
            else:
                if tokens[1] not in _PLY_DTYPES:
                    raise PlyFormatError(f"{path}: unknown property type '{tokens[1]}'")
                elements[-1][2].append((tokens[2], _PLY_DTYPES[tokens[1]]))
    if fmt is None:
        raise PlyFormatError(f"{path}: missing format line")
    return fmt, elements, end


def _read_ply(path):
    """Reads all PLY elements into {element_name: {prop_name: array}}."""
    path = Path(path)
    raw = path.read_bytes()
    fmt, elements, offset = _parse_ply_header(raw, path)
    out = {}
    if fmt == "binary_little_endian":
        for name, count, props in elements:
            if any(p[0] == "list" for p in props):
                # Variable-length rows; parse sequentially (face elements).
                out[name], offset = _read_binary_list_element(raw, offset, count, props, path)
                continue
            dt = np.dtype([(p[0], "<" + p[1]) for p in props])
            nbytes = dt.itemsize * count
            if offset + nbytes > len(raw):
                raise PlyFormatError(f"{path}: truncated body at byte {len(raw)} (need {offset + nbytes})")
            rows = np.frombuffer(raw, dtype=dt, count=count, offset=offset)
            offset += nbytes
            out[name] = {p[0]: rows[p[0]] for p in props}
    else:
        text = raw[offset:].decode("ascii")
        lines = text.split("\n")
        li = 0
        for name, count, props in elements:
            cols = {p if isinstance(p, str) else p[0]: [] for p in [pr[0] if pr[0] != "list" else pr[3] for pr in props]}
            listprop = next((p for p in props if p[0] == "list"), None)
            for _ in range(count):
                while li < len(lines) and not lines[li].strip():
                    li += 1
                if li >= len(lines):
                    raise PlyFormatError(f"{path}: truncated ASCII body in element '{name}'")
                tokens = lines[li].split()
                li += 1
                if listprop is not None:
                    n = int(tokens[0])
                    cols[listprop[3]].append([int(t) for t in tokens[1 : 1 + n]])
                else:
                    if len(tokens) < len(props):
                        raise PlyFormatError(f"{path}: row in '{name}' has {len(tokens)} values, wanted {len(props)}")
                    for (pname, pdt), tok in zip(props, tokens):
                        cols[pname].append(float(tok) if pdt in ("f4", "f8") else int(tok))
            out[name] = {
                k: (np.array(v) if k != (listprop[3] if listprop else None) else v) for k, v in cols.items()
            }
    return out


def _read_binary_list_element(raw, offset, count, props, path):
    if len(props) != 1:
        raise PlyFormatError(f"{path}: mixed list/scalar element rows are unsupported")
    _, cdt, vdt, name = props[0]
    cdt = np.dtype("<" + cdt)
    vdt = np.dtype("<" + vdt)
    rows = []
    for _ in range(count):
        n = int(np.frombuffer(raw, dtype=cdt, count=1, offset=offset)[0])
        offset += cdt.itemsize
        rows.append(np.frombuffer(raw, dtype=vdt, count=n, offset=offset).astype(np.int64))
        offset += vdt.itemsize * n
    return {name: rows}, offset


def load_point_cloud(path) -> PointCloud:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"point cloud file not found: {path}")
    data = _read_ply(path)
    if "vertex" not in data:
        raise PlyFormatError(f"{path}: no vertex element")
    v = data["vertex"]
    for axis in ("x", "y", "z"):
        if axis not in v:
            raise PlyFormatError(f"{path}: vertex element lacks property '{axis}'")
    positions = np.stack([np.asarray(v["x"], np.float64), np.asarray(v["y"], np.float64), np.asarray(v["z"], np.float64)], axis=1)
    colors = None
    if all(c in v for c in ("red", "green", "blue")):
        colors = np.stack([v["red"], v["green"], v["blue"]], axis=1).astype(np.float64) / 255.0
    normals = None
    if all(c in v for c in ("nx", "ny", "nz")):
        normals = np.stack([v["nx"], v["ny"], v["nz"]], axis=1).astype(np.float64)
        # Guard against quantization drift from float32 files.
        norms = np.linalg.norm(normals, axis=1)
        nz = norms > 0
        normals[nz] /= norms[nz, None]
        normals[~nz] = (0.0, 0.0, 1.0)
    instance_ids = None
    if "instance_id" in v:
        instance_ids = np.asarray(v["instance_id"], np.int64)
    return PointCloud(positions, colors=colors, normals=normals, instance_ids=instance_ids)


def load_mesh(path) -> TriMesh:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh file not found: {path}")
    data = _read_ply(path)
    if "vertex" not in data or "face" not in data:
        raise PlyFormatError(f"{path}: mesh needs vertex and face elements")
    v = data["vertex"]
    verts = np.stack([np.asarray(v["x"], np.float64), np.asarray(v["y"], np.float64), np.asarray(v["z"], np.float64)], axis=1)
    facelists = next(iter(data["face"].values()))
    tris = []
    for f in facelists:
        f = np.asarray(f, np.int64)
        for k in range(1, len(f) - 1):  # fan-triangulate polygons
            tris.append((f[0], f[k], f[k + 1]))
    faces = np.array(tris, np.int64).reshape(-1, 3)
    colors = None
    if all(c in v for c in ("red", "green", "blue")):
        colors = np.stack([v["red"], v["green"], v["blue"]], axis=1).astype(np.float64) / 255.0
    return TriMesh(verts, faces, colors=colors)


def save_point_cloud(path, cloud: PointCloud, binary: bool = True):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    props = [("x", "double"), ("y", "double"), ("z", "double")]
    cols = [cloud.positions[:, 0], cloud.positions[:, 1], cloud.positions[:, 2]]
    if cloud.colors is not None:
        props += [("red", "uchar"), ("green", "uchar"), ("blue", "uchar")]
        rgb = np.rint(cloud.colors * 255.0).astype(np.uint8)
        cols += [rgb[:, 0], rgb[:, 1], rgb[:, 2]]
    if cloud.normals is not None:
        props += [("nx", "double"), ("ny", "double"), ("nz", "double")]
        cols += [cloud.normals[:, 0], cloud.normals[:, 1], cloud.normals[:, 2]]
    if cloud.instance_ids is not None:
        props += [("instance_id", "uint")]
        cols += [cloud.instance_ids.astype(np.uint32)]
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {len(cloud)}"]
    header += [f"property {t} {n}" for n, t in props]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            dt = np.dtype([(n, "<" + _PLY_DTYPES[t]) for n, t in props])
            rows = np.empty(len(cloud), dtype=dt)
            for (n, _), col in zip(props, cols):
                rows[n] = col
            f.write(rows.tobytes())
        else:
            for i in range(len(cloud)):
                parts = []
                for (n, t), col in zip(props, cols):
                    parts.append(f"{col[i]:.17g}" if t == "double" else str(int(col[i])))
                f.write((" ".join(parts) + "\n").encode("ascii"))


def save_mesh(path, mesh: TriMesh, binary: bool = True):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {len(mesh.vertices)}",
              "property double x", "property double y", "property double z",
              f"element face {len(mesh.faces)}",
              "property list uchar int vertex_indices", "end_header"]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            f.write(np.ascontiguousarray(mesh.vertices, "<f8").tobytes())
            counts = np.full((len(mesh.faces), 1), 3, np.uint8)
            rows = b"".join(
                counts[i].tobytes() + mesh.faces[i].astype("<i4").tobytes() for i in range(len(mesh.faces))
            )
            f.write(rows)
        else:
            for vtx in mesh.vertices:
                f.write(f"{vtx[0]:.17g} {vtx[1]:.17g} {vtx[2]:.17g}\n".encode("ascii"))
            for face in mesh.faces:
                f.write(f"3 {face[0]} {face[1]} {face[2]}\n".encode("ascii"))


def load_pose(path) -> Pose:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"pose file not found: {path}")
    values = np.loadtxt(path, dtype=np.float64)
    if values.shape != (4, 4):
        raise ValueError(f"{path}: pose file must hold a 4x4 matrix, got shape {values.shape}")
    return Pose(values)


def save_pose(path, pose: Pose):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [" ".join(f"{x:.17g}" for x in row) for row in pose.matrix]
    path.write_text("\n".join(lines) + "\n")


def load_depth(path, scale: float = DEFAULT_DEPTH_SCALE) -> DepthImage:
    arr = _load_png16(path)
    return DepthImage(arr.astype(np.float64) * scale)


def save_depth(path, depth: DepthImage, scale: float = DEFAULT_DEPTH_SCALE):
    units = np.rint(depth.values / scale)
    if units.max(initial=0) > 0xFFFF:
        raise ValueError(f"depth exceeds 16-bit range at scale {scale}")
    _save_png16(path, units.astype(np.uint16))


def load_labels(path) -> LabelImage:
    return LabelImage(_load_png16(path).astype(np.int32))


def save_labels(path, labels: LabelImage):
    _save_png16(path, labels.ids.astype(np.uint16))


def load_color(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"color image not found: {path}")
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def save_color(path, image: np.ndarray):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, np.uint8), mode="RGB").save(path)


def _load_png16(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    img = Image.open(path)
    if img.mode not in ("I", "I;16"):
        raise ValueError(f"{path}: expected 16-bit single-channel PNG, got mode '{img.mode}'")
    arr = np.asarray(img, dtype=np.int64)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected single channel, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 0xFFFF:
        raise ValueError(f"{path}: pixel values outside 16-bit range")
    return arr.astype(np.uint16)


def _save_png16(path, arr: np.ndarray):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(arr, dtype=np.uint16)
    Image.fromarray(arr).save(path)


@dataclass(frozen=True)
class ViewSpec:
    """One view entry of a manifest; paths already resolved."""

    pose_path: Path
    intrinsics: Intrinsics
    depth_path: Optional[Path] = None
    color_path: Optional[Path] = None
    label_paths: Dict[str, Path] = field(default_factory=dict)


@dataclass(frozen=True)
class SceneManifest:
    reference_scan: Path
    rescan: Path
    views: List[ViewSpec]
    ground_truth: Optional[Path] = None
    depth_scale: float = DEFAULT_DEPTH_SCALE
    root: Optional[Path] = None


@dataclass(frozen=True)
class GroundTruth:
    """Changed instances as rescan point-index sets.

    removed_instance_ids records objects that exist only in the reference
    scan; they have no rescan points and are excluded from matching.
    """

    changed_instances: List[dict]
    removed_instance_ids: List[int] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for inst in self.changed_instances:
            idx = set(int(i) for i in inst["point_indices"])
            if any(i < 0 for i in idx):
                raise ValueError("ground-truth point indices must be non-negative")
            if seen & idx:
                raise ValueError("ground-truth instances must be disjoint")
            seen |= idx


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ValueError(f"{context}: missing required field '{key}'")
    return mapping[key]


def load_manifest(path) -> SceneManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: manifest is not valid JSON at line {e.lineno}: {e.msg}") from e
    root = path.parent

    def resolve(rel, field_name, must_exist=True):
        p = root / rel
        if must_exist and not p.exists():
            raise FileNotFoundError(f"{path}: field '{field_name}' references missing file {p}")
        return p

    reference = resolve(_require(raw, "reference_scan", str(path)), "reference_scan")
    rescan = resolve(_require(raw, "rescan", str(path)), "rescan")
    views_raw = _require(raw, "views", str(path))
    if not views_raw:
        raise ValueError(f"{path}: view list is empty")
    views = []
    for i, vr in enumerate(views_raw):
        ctx = f"{path} view[{i}]"
        intr_raw = _require(vr, "intrinsics", ctx)
        intr = Intrinsics(
            fx=float(_require(intr_raw, "fx", ctx)),
            fy=float(_require(intr_raw, "fy", ctx)),
            cx=float(_require(intr_raw, "cx", ctx)),
            cy=float(_require(intr_raw, "cy", ctx)),
            width=int(_require(intr_raw, "width", ctx)),
            height=int(_require(intr_raw, "height", ctx)),
        )
        views.append(
            ViewSpec(
                pose_path=resolve(_require(vr, "pose_path", ctx), "pose_path"),
                intrinsics=intr,
                depth_path=resolve(vr["depth_path"], "depth_path") if vr.get("depth_path") else None,
                color_path=resolve(vr["color_path"], "color_path") if vr.get("color_path") else None,
                label_paths={
                    src: resolve(p, f"label_paths[{src}]") for src, p in sorted(vr.get("label_paths", {}).items())
                },
            )
        )
    gt = resolve(raw["ground_truth"], "ground_truth") if raw.get("ground_truth") else None
    return SceneManifest(
        reference_scan=reference,
        rescan=rescan,
        views=views,
        ground_truth=gt,
        depth_scale=float(raw.get("depth_scale", DEFAULT_DEPTH_SCALE)),
        root=root,
    )


def save_manifest(path, manifest_dict: dict):
    """Writes a manifest dict with relative paths as-is; caller owns layout."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest_dict, indent=2, sort_keys=True) + "\n")


def load_ground_truth(path, n_points: Optional[int] = None) -> GroundTruth:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"ground truth not found: {path}")
    raw = json.loads(path.read_text())
    instances = []
    for inst in _require(raw, "changed_instances", str(path)):
        idx = [int(i) for i in _require(inst, "point_indices", str(path))]
        if n_points is not None and idx and max(idx) >= n_points:
            raise ValueError(f"{path}: ground-truth index {max(idx)} out of range for {n_points} points")
        instances.append({"instance_id": int(_require(inst, "instance_id", str(path))), "point_indices": idx})
    return GroundTruth(instances, removed_instance_ids=[int(i) for i in raw.get("removed_instance_ids", [])])


def save_ground_truth(path, gt: GroundTruth):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "changed_instances": [
            {"instance_id": inst["instance_id"], "point_indices": [int(i) for i in inst["point_indices"]]}
            for inst in gt.changed_instances
        ],
        "removed_instance_ids": [int(i) for i in gt.removed_instance_ids],
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def save_detections(path, detections, params: dict, metrics: Optional[dict] = None):
    """Serializes a detection list to the engine's JSON format.

    ``detections`` is any iterable of objects with id, score, and
    point_indices attributes (or equivalent dicts).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for d in detections:
        if isinstance(d, dict):
            rows.append({"id": int(d["id"]), "score": float(d["score"]),
                         "point_indices": [int(i) for i in d["point_indices"]]})
        else:
            rows.append({"id": int(d.id), "score": float(d.score),
                         "point_indices": [int(i) for i in d.point_indices]})
    payload = {"detections": rows, "params": params}
    if metrics is not None:
        payload["metrics"] = metrics
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_detections(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"detections file not found: {path}")
    raw = json.loads(path.read_text())
    _require(raw, "detections", str(path))
    return raw


@dataclass(frozen=True)
class ScenePair:
    """Fully loaded scene: both clouds, posed views, optional ground truth."""

    reference: PointCloud
    rescan: PointCloud
    views: List[CameraView]
    ground_truth: Optional[GroundTruth] = None
    manifest: Optional[SceneManifest] = None


def load_scene(manifest: SceneManifest, load_images: bool = True) -> ScenePair:
    reference = load_point_cloud(manifest.reference_scan)
    rescan = load_point_cloud(manifest.rescan)
    views = []
    for vs in manifest.views:
        depth = color = None
        labels = {}
        if load_images:
            if vs.depth_path is not None:
                depth = load_depth(vs.depth_path, manifest.depth_scale)
            if vs.color_path is not None:
                color = load_color(vs.color_path)
            labels = {src: load_labels(p) for src, p in vs.label_paths.items()}
        views.append(CameraView(pose=load_pose(vs.pose_path), intrinsics=vs.intrinsics,
                                depth=depth, color=color, labels=labels))
    gt = load_ground_truth(manifest.ground_truth, n_points=len(rescan)) if manifest.ground_truth else None
    return ScenePair(reference=reference, rescan=rescan, views=views, ground_truth=gt, manifest=manifest)

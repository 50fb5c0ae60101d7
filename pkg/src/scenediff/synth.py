"""Synthetic scene-pair generation with analytic oracles.

Scenes are cuboid rooms with cuboid objects; every surface is a 3D
rectangle, so depth and instance label maps come from exact ray
intersections rather than rasterization.  Rescan geometry reuses the
reference sample points wherever nothing changed (and rigidly transforms
them for moved objects), so an unchanged pair is bitwise identical and
ground-truth indices follow directly from construction.

All randomness flows from the spec seed through per-purpose substreams,
making the output tree a pure function of the spec.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import DepthImage, Intrinsics, LabelImage, PointCloud, Pose, TriMesh
from . import io as scan_io

RAY_EPS = 1e-12
EDGE_TOL = 1e-12


@dataclass(frozen=True)
class Surface:
    """A 3D rectangle: origin corner plus two edge vectors."""

    origin: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    instance_id: int
    color: Tuple[float, float, float]

    def normal(self) -> np.ndarray:
        n = np.cross(self.e1, self.e2)
        return n / np.linalg.norm(n)

    def area(self) -> float:
        return float(np.linalg.norm(self.e1) * np.linalg.norm(self.e2))


@dataclass(frozen=True)
class ChangeSpec:
    """What happens to an object between scans."""

    kind: str = "keep"  # keep | move | remove | add
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw: float = 0.0

    def __post_init__(self):
        if self.kind not in ("keep", "move", "remove", "add"):
            raise ValueError(f"unknown change kind '{self.kind}'")


@dataclass(frozen=True)
class ObjectSpec:
    """A cuboid in the scene.

    background marks a fixture (shelf, counter): its surfaces carry label
    0 like walls and floor, it never changes, and it is absent from the
    ground truth.
    """

    instance_id: int
    size: Tuple[float, float, float]
    center: Tuple[float, float, float]
    yaw: float = 0.0
    color: Tuple[float, float, float] = (0.8, 0.3, 0.2)
    change: ChangeSpec = field(default_factory=ChangeSpec)
    background: bool = False

    def __post_init__(self):
        if self.instance_id < 1:
            raise ValueError("object instance ids start at 1 (0 is background)")
        if any(s <= 0 for s in self.size):
            raise ValueError("object size must be positive")
        if self.background and self.change.kind != "keep":
            raise ValueError("background fixtures cannot change")

    @property
    def label_id(self) -> int:
        return 0 if self.background else self.instance_id


@dataclass(frozen=True)
class CameraRig:
    n_views: int = 12
    height: float = 1.5
    radius: float = 1.1
    target: Optional[Tuple[float, float, float]] = None
    intrinsics: Intrinsics = field(
        default_factory=lambda: Intrinsics(fx=110.0, fy=110.0, cx=79.5, cy=59.5, width=160, height=120)
    )

    def __post_init__(self):
        if self.n_views < 1:
            raise ValueError("need at least one camera view")


@dataclass(frozen=True)
class SceneSpec:
    room_size: Tuple[float, float, float] = (3.4, 2.8, 2.2)
    room_color: Tuple[float, float, float] = (0.6, 0.6, 0.6)
    ceiling: bool = False
    objects: List[ObjectSpec] = field(default_factory=list)
    camera: CameraRig = field(default_factory=CameraRig)
    density: float = 2500.0
    seed: int = 0
    depth_sigma: float = 0.0
    jitter: float = 0.0
    label_background: bool = False

    def __post_init__(self):
        if self.density <= 0:
            raise ValueError("sampling density must be positive")
        ids = [o.instance_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object instance ids must be unique")
        for obj in self.objects:
            for center, yaw in _object_poses(obj):
                self._check_inside(obj, center, yaw)

    def _check_inside(self, obj: ObjectSpec, center, yaw):
        half = np.array(obj.size) / 2.0
        c, s = np.cos(yaw), np.sin(yaw)
        ext = np.array(
            [abs(c) * half[0] + abs(s) * half[1], abs(s) * half[0] + abs(c) * half[1], half[2]]
        )
        lo = np.array(center) - ext
        hi = np.array(center) + ext
        room = np.array(self.room_size)
        if np.any(lo < -1e-9) or np.any(hi > room + 1e-9):
            raise ValueError(f"object {obj.instance_id} extends outside the room at {center}")


def _object_poses(obj: ObjectSpec):
    """(center, yaw) for every scan the object appears in."""
    base = (np.array(obj.center, dtype=np.float64), obj.yaw)
    if obj.change.kind in ("keep", "remove"):
        return [base]
    if obj.change.kind == "add":
        return [base]
    moved = (base[0] + np.array(obj.change.translation), obj.yaw + obj.change.yaw)
    return [base, moved]


def room_surfaces(spec: SceneSpec) -> List[Surface]:
    lx, ly, h = spec.room_size
    col = spec.room_color
    surfaces = [
        Surface(np.array([0.0, 0.0, 0.0]), np.array([lx, 0.0, 0.0]), np.array([0.0, ly, 0.0]), 0, col),
        Surface(np.array([0.0, 0.0, 0.0]), np.array([0.0, ly, 0.0]), np.array([0.0, 0.0, h]), 0, col),
        Surface(np.array([lx, 0.0, 0.0]), np.array([0.0, 0.0, h]), np.array([0.0, ly, 0.0]), 0, col),
        Surface(np.array([0.0, 0.0, 0.0]), np.array([0.0, 0.0, h]), np.array([lx, 0.0, 0.0]), 0, col),
        Surface(np.array([0.0, ly, 0.0]), np.array([lx, 0.0, 0.0]), np.array([0.0, 0.0, h]), 0, col),
    ]
    if spec.ceiling:
        surfaces.append(
            Surface(np.array([0.0, 0.0, h]), np.array([0.0, ly, 0.0]), np.array([lx, 0.0, 0.0]), 0, col)
        )
    return surfaces


def cuboid_surfaces(
    obj: ObjectSpec, center, yaw: float, support_zs: Sequence[float] = (0.0,)
) -> List[Surface]:
    """Six faces with outward normals; the bottom face is skipped when the
    cuboid rests flush on a support plane (the floor, or the top of a
    background fixture), where the contact face is unobservable and would
    only blur the boundary between the object and its support."""
    center = np.asarray(center, dtype=np.float64)
    hx, hy, hz = np.array(obj.size) / 2.0
    c, s = np.cos(yaw), np.sin(yaw)
    ax = np.array([c, s, 0.0])
    ay = np.array([-s, c, 0.0])
    az = np.array([0.0, 0.0, 1.0])
    col = obj.color
    iid = obj.label_id
    faces = [
        Surface(center + hx * ax - hy * ay - hz * az, 2 * hy * ay, 2 * hz * az, iid, col),
        Surface(center - hx * ax + hy * ay - hz * az, -2 * hy * ay, 2 * hz * az, iid, col),
        Surface(center + hy * ay + hx * ax - hz * az, -2 * hx * ax, 2 * hz * az, iid, col),
        Surface(center - hy * ay - hx * ax - hz * az, 2 * hx * ax, 2 * hz * az, iid, col),
        Surface(center - hx * ax - hy * ay + hz * az, 2 * hx * ax, 2 * hy * ay, iid, col),
    ]
    base = center[2] - hz
    if all(abs(base - z) > 1e-9 for z in support_zs):
        faces.append(
            Surface(center - hx * ax + hy * ay - hz * az, 2 * hx * ax, -2 * hy * ay, iid, col)
        )
    return faces


def scene_surfaces(spec: SceneSpec, which: str) -> List[Surface]:
    """All surfaces of one scan ('reference' or 'rescan')."""
    if which not in ("reference", "rescan"):
        raise ValueError(f"unknown scan '{which}'")
    surfaces = room_surfaces(spec)
    supports = [0.0] + [o.center[2] + o.size[2] / 2.0 for o in spec.objects if o.background]
    for obj in sorted(spec.objects, key=lambda o: o.instance_id):
        kind = obj.change.kind
        if which == "reference" and kind in ("keep", "move", "remove"):
            surfaces.extend(cuboid_surfaces(obj, obj.center, obj.yaw, supports))
        elif which == "rescan":
            if kind == "keep":
                surfaces.extend(cuboid_surfaces(obj, obj.center, obj.yaw, supports))
            elif kind == "move":
                center = np.array(obj.center) + np.array(obj.change.translation)
                surfaces.extend(cuboid_surfaces(obj, center, obj.yaw + obj.change.yaw, supports))
            elif kind == "add":
                surfaces.extend(cuboid_surfaces(obj, obj.center, obj.yaw, supports))
    return surfaces


def _sample_surface(surface: Surface, density: float, rng, jitter: float):
    """Stratified grid sample of one rectangle; spacing ~ 1/sqrt(density)."""
    len1 = np.linalg.norm(surface.e1)
    len2 = np.linalg.norm(surface.e2)
    spacing = 1.0 / np.sqrt(density)
    n1 = max(1, int(round(len1 / spacing)))
    n2 = max(1, int(round(len2 / spacing)))
    i, j = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    f1 = (i.ravel() + 0.5) / n1
    f2 = (j.ravel() + 0.5) / n2
    if jitter > 0:
        f1 = f1 + rng.uniform(-0.5, 0.5, f1.shape) * jitter / n1
        f2 = f2 + rng.uniform(-0.5, 0.5, f2.shape) * jitter / n2
        f1 = np.clip(f1, 0.0, 1.0)
        f2 = np.clip(f2, 0.0, 1.0)
    pts = surface.origin + f1[:, None] * surface.e1 + f2[:, None] * surface.e2
    return pts


@dataclass(frozen=True)
class SampledScan:
    cloud: PointCloud
    instance_slices: Dict[int, np.ndarray]  # instance id -> point indices


def _transform_rigid(points, pivot, translation, yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return (points - pivot) @ rot.T + pivot + translation


def sample_scene(spec: SceneSpec):
    """Samples both scans; unchanged surfaces share identical points.

    Returns (reference: SampledScan, rescan: SampledScan).
    """
    room = room_surfaces(spec)
    ref_parts = []
    res_parts = []

    def sample_set(surfaces, stream_key):
        rng = np.random.default_rng((spec.seed, stream_key))
        pts, normals, colors, iids = [], [], [], []
        for surf in surfaces:
            p = _sample_surface(surf, spec.density, rng, spec.jitter)
            pts.append(p)
            normals.append(np.tile(surf.normal(), (len(p), 1)))
            colors.append(np.tile(surf.color, (len(p), 1)))
            iids.append(np.full(len(p), surf.instance_id, dtype=np.int64))
        return (
            np.concatenate(pts),
            np.concatenate(normals),
            np.concatenate(colors),
            np.concatenate(iids),
        )

    room_data = sample_set(room, 0)
    ref_parts.append(room_data)
    res_parts.append(room_data)
    supports = [0.0] + [o.center[2] + o.size[2] / 2.0 for o in spec.objects if o.background]
    for obj in sorted(spec.objects, key=lambda o: o.instance_id):
        kind = obj.change.kind
        data = sample_set(cuboid_surfaces(obj, obj.center, obj.yaw, supports), obj.instance_id)
        if kind == "keep":
            ref_parts.append(data)
            res_parts.append(data)
        elif kind == "remove":
            ref_parts.append(data)
        elif kind == "add":
            res_parts.append(data)
        elif kind == "move":
            ref_parts.append(data)
            moved_pts = _transform_rigid(
                data[0], np.array(obj.center), np.array(obj.change.translation), obj.change.yaw
            )
            c, s = np.cos(obj.change.yaw), np.sin(obj.change.yaw)
            rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
            res_parts.append((moved_pts, data[1] @ rot.T, data[2], data[3]))

    def assemble(parts):
        pts = np.concatenate([p[0] for p in parts])
        normals = np.concatenate([p[1] for p in parts])
        colors = np.concatenate([p[2] for p in parts])
        iids = np.concatenate([p[3] for p in parts])
        cloud = PointCloud(pts, colors=np.clip(colors, 0, 1), normals=normals, instance_ids=iids)
        slices = {
            int(i): np.nonzero(iids == i)[0] for i in np.unique(iids) if i > 0
        }
        return SampledScan(cloud=cloud, instance_slices=slices)

    return assemble(ref_parts), assemble(res_parts)


def ring_poses(spec: SceneSpec) -> List[Pose]:
    rig = spec.camera
    lx, ly, _ = spec.room_size
    target = np.array(rig.target if rig.target is not None else (lx / 2, ly / 2, 0.5))
    center = np.array([lx / 2, ly / 2, rig.height])
    poses = []
    for k in range(rig.n_views):
        ang = 2.0 * np.pi * k / rig.n_views
        pos = center + rig.radius * np.array([np.cos(ang), np.sin(ang), 0.0])
        poses.append(look_at(pos, target))
    return poses


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose with +Z toward target and +Y pointing down."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("camera position coincides with target")
    forward = forward / norm
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, (0.0, 1.0, 0.0))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward], axis=1)
    return Pose.from_rotation_translation(rot, position)


def cast_depth_labels(surfaces: List[Surface], pose: Pose, intr: Intrinsics):
    """Exact per-pixel depth and instance labels by ray-rectangle tests.

    Depth is the camera-frame z of the nearest hit (rays carry unit z, so
    the ray parameter is the depth); pixels hitting nothing get 0.
    """
    us, vs = np.meshgrid(np.arange(intr.width), np.arange(intr.height))
    dirs_cam = np.stack(
        [(us - intr.cx) / intr.fx, (vs - intr.cy) / intr.fy, np.ones_like(us, dtype=np.float64)],
        axis=-1,
    ).reshape(-1, 3)
    dirs = dirs_cam @ pose.rotation.T
    origin = pose.translation
    best_t = np.full(len(dirs), np.inf)
    best_id = np.zeros(len(dirs), dtype=np.int32)
    best_color = np.zeros((len(dirs), 3))
    for surf in surfaces:
        n = np.cross(surf.e1, surf.e2)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(denom) > RAY_EPS, ((surf.origin - origin) @ n) / denom, np.inf)
        cand = (t > RAY_EPS) & (t < best_t)
        if not cand.any():
            continue
        hit = origin + t[cand, None] * dirs[cand]
        rel = hit - surf.origin
        s1 = (rel @ surf.e1) / (surf.e1 @ surf.e1)
        s2 = (rel @ surf.e2) / (surf.e2 @ surf.e2)
        inside = (s1 >= -EDGE_TOL) & (s1 <= 1 + EDGE_TOL) & (s2 >= -EDGE_TOL) & (s2 <= 1 + EDGE_TOL)
        sel = np.nonzero(cand)[0][inside]
        best_t[sel] = t[sel]
        best_id[sel] = surf.instance_id
        best_color[sel] = surf.color
    depth = np.where(np.isfinite(best_t), best_t, 0.0).reshape(intr.height, intr.width)
    labels = best_id.reshape(intr.height, intr.width)
    colors = (np.clip(best_color, 0, 1) * 255).astype(np.uint8).reshape(intr.height, intr.width, 3)
    return DepthImage(depth), LabelImage(labels), colors


def fragment_masks(labels: LabelImage, parts: int, rng) -> LabelImage:
    """Splits every instance's pixel region into `parts` connected chunks
    with fresh ids, simulating an over-segmenting mask generator.  The
    union of the chunks is exactly the original region."""
    if parts < 1:
        raise ValueError("parts must be >= 1")
    if parts == 1:
        return labels
    ids = labels.ids
    out = np.zeros_like(ids)
    next_id = 1
    offsets = np.array([(-1, 0), (1, 0), (0, -1), (0, 1)])
    for iid in np.unique(ids):
        if iid == 0:
            continue
        region = np.argwhere(ids == iid)
        k = min(parts, len(region))
        picks = rng.choice(len(region), size=k, replace=False)
        part_of = {}
        frontiers = [[tuple(region[p])] for p in sorted(picks.tolist())]
        for fi, fr in enumerate(frontiers):
            part_of[fr[0]] = fi
        region_set = set(map(tuple, region))
        active = True
        while active:
            active = False
            for fi in range(k):
                nxt = []
                for (r, c) in frontiers[fi]:
                    for dr, dc in offsets:
                        cell = (r + dr, c + dc)
                        if cell in region_set and cell not in part_of:
                            part_of[cell] = fi
                            nxt.append(cell)
                frontiers[fi] = nxt
                if nxt:
                    active = True
        # Pixels in disconnected islands unreachable from any pick: each
        # island becomes its own extra chunk.
        leftovers = [cell for cell in map(tuple, region) if cell not in part_of]
        extra = k
        for cell in leftovers:
            if cell in part_of:
                continue
            stack = [cell]
            part_of[cell] = extra
            while stack:
                r, c = stack.pop()
                for dr, dc in offsets:
                    nb = (r + dr, c + dc)
                    if nb in region_set and nb not in part_of:
                        part_of[nb] = extra
                        stack.append(nb)
            extra += 1
        for cell, fi in part_of.items():
            out[cell] = next_id + fi
        next_id += extra
    return LabelImage(out)


def generate(spec: SceneSpec, out_dir) -> Path:
    """Writes the full scene tree and returns the manifest path.

    Layout: ref.ply, rescan.ply, poses/, depth/, color/, labels/oracle/,
    gt.json, manifest.json.  Depth images are the analytic rescan depth;
    label maps are perfect per-pixel instance ids.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reference, rescan = sample_scene(spec)
    scan_io.save_point_cloud(out / "ref.ply", reference.cloud)
    scan_io.save_point_cloud(out / "rescan.ply", rescan.cloud)

    poses = ring_poses(spec)
    intr = spec.camera.intrinsics
    rescan_surfaces = scene_surfaces(spec, "rescan")
    noise_rng = np.random.default_rng((spec.seed, 9000))
    views = []
    for vid, pose in enumerate(poses):
        depth, labels, colors = cast_depth_labels(rescan_surfaces, pose, intr)
        if spec.depth_sigma > 0:
            noisy = depth.values + noise_rng.normal(0.0, spec.depth_sigma, depth.values.shape)
            depth = DepthImage(np.where(depth.values > 0, np.clip(noisy, 1e-4, None), 0.0))
        scan_io.save_pose(out / "poses" / f"view_{vid:03d}.txt", pose)
        scan_io.save_depth(out / "depth" / f"view_{vid:03d}.png", depth)
        scan_io.save_labels(out / "labels" / "oracle" / f"view_{vid:03d}.png", labels)
        scan_io.save_color(out / "color" / f"view_{vid:03d}.png", colors)
        views.append(
            {
                "pose_path": f"poses/view_{vid:03d}.txt",
                "intrinsics": {
                    "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
                    "width": intr.width, "height": intr.height,
                },
                "depth_path": f"depth/view_{vid:03d}.png",
                "color_path": f"color/view_{vid:03d}.png",
                "label_paths": {"oracle": f"labels/oracle/view_{vid:03d}.png"},
            }
        )

    changed = []
    removed = []
    for obj in sorted(spec.objects, key=lambda o: o.instance_id):
        if obj.change.kind in ("move", "add"):
            changed.append(
                {
                    "instance_id": obj.instance_id,
                    "point_indices": rescan.instance_slices[obj.instance_id].tolist(),
                }
            )
        elif obj.change.kind == "remove":
            removed.append(obj.instance_id)
    scan_io.save_ground_truth(out / "gt.json", scan_io.GroundTruth(changed, removed))

    manifest = {
        "reference_scan": "ref.ply",
        "rescan": "rescan.ply",
        "depth_scale": scan_io.DEFAULT_DEPTH_SCALE,
        "ground_truth": "gt.json",
        "views": views,
    }
    scan_io.save_manifest(out / "manifest.json", manifest)
    return out / "manifest.json"


def room_mesh(spec: SceneSpec, which: str = "rescan") -> TriMesh:
    """Triangle mesh of the scene's rectangles (two triangles each), for
    exercising the mesh render path against the analytic caster."""
    verts = []
    faces = []
    for surf in scene_surfaces(spec, which):
        base = len(verts)
        verts.extend([surf.origin, surf.origin + surf.e1, surf.origin + surf.e1 + surf.e2,
                      surf.origin + surf.e2])
        faces.append((base, base + 1, base + 2))
        faces.append((base, base + 2, base + 3))
    return TriMesh(np.array(verts), np.array(faces, dtype=np.int64))


def spec_from_dict(raw: dict) -> SceneSpec:
    """Builds a SceneSpec from parsed JSON (the `synth` CLI input)."""
    cam_raw = dict(raw.get("camera", {}))
    intr_raw = cam_raw.pop("intrinsics", None)
    if intr_raw is not None:
        cam_raw["intrinsics"] = Intrinsics(**intr_raw)
    objects = []
    for obj_raw in raw.get("objects", []):
        obj_raw = dict(obj_raw)
        change_raw = obj_raw.pop("change", None)
        if change_raw:
            change_raw = dict(change_raw)
            if "translation" in change_raw:
                change_raw["translation"] = tuple(change_raw["translation"])
            change = ChangeSpec(**change_raw)
        else:
            change = ChangeSpec()
        obj_raw["size"] = tuple(obj_raw["size"])
        obj_raw["center"] = tuple(obj_raw["center"])
        if "color" in obj_raw:
            obj_raw["color"] = tuple(obj_raw["color"])
        objects.append(ObjectSpec(change=change, **obj_raw))
    kwargs = {
        k: raw[k]
        for k in ("room_size", "room_color", "ceiling", "density", "seed",
                  "depth_sigma", "jitter", "label_background")
        if k in raw
    }
    if "room_size" in kwargs:
        kwargs["room_size"] = tuple(kwargs["room_size"])
    if "room_color" in kwargs:
        kwargs["room_color"] = tuple(kwargs["room_color"])
    return SceneSpec(objects=objects, camera=CameraRig(**cam_raw), **kwargs)


def load_spec(path) -> SceneSpec:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scene spec not found: {path}")
    return spec_from_dict(json.loads(path.read_text()))

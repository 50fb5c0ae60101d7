"""Projection of 2D segmentation label maps onto the supervoxel graph.

Points inherit the label at their projected pixel when they pass an
occlusion test against rendered rescan depth; supervoxels take the
majority label of their points; and adjacent supervoxels sharing a
nonzero label in any view (of any source) get a same-mask edge
indicator.  Label 0 is "no mask" and never links anything.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .core import CameraView, DepthImage, LabelImage, PointCloud, project_points
from .supervoxels import SupervoxelGraph

DEFAULT_DEPTH_TOL = 0.05


@dataclass(frozen=True)
class MaskAssignment:
    """Per-view supervoxel mask ids for one mask source; 0 = unassigned."""

    source: str
    per_view: Dict[int, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class EdgeWeights:
    """Per-edge weights aligned with a graph's edge array."""

    values: np.ndarray
    mode: str = "same_mask"


def assign_point_masks(
    cloud: PointCloud,
    view: CameraView,
    labels: LabelImage,
    rendered_rescan_depth: DepthImage,
    depth_tol: float = DEFAULT_DEPTH_TOL,
) -> np.ndarray:
    """Label id per point for one view, 0 where invisible or occluded.

    A point must project inside the image and agree with the rendered
    rescan depth within depth_tol; otherwise a mask painted on closer
    geometry would bleed onto hidden points behind it.
    """
    if (labels.height, labels.width) != rendered_rescan_depth.values.shape:
        raise ValueError("label and depth dimensions differ")
    cam = view.pose.world_to_camera(cloud.positions)
    u, v, z, valid = project_points(cam, view.intrinsics)
    out = np.zeros(len(cloud), dtype=np.int32)
    if not valid.any():
        return out
    pu = np.rint(u[valid]).astype(np.int64)
    pv = np.rint(v[valid]).astype(np.int64)
    depth_at = rendered_rescan_depth.values[pv, pu]
    visible = (depth_at > 0) & (np.abs(z[valid] - depth_at) <= depth_tol)
    sel = np.nonzero(valid)[0][visible]
    out[sel] = labels.ids[pv[visible], pu[visible]]
    return out


def supervoxel_mask(graph: SupervoxelGraph, point_masks: np.ndarray) -> np.ndarray:
    """Majority nonzero label per supervoxel; ties go to the smaller id."""
    point_masks = np.asarray(point_masks)
    out = np.zeros(graph.n_supervoxels, dtype=np.int32)
    nz = point_masks > 0
    if not nz.any():
        return out
    sv = graph.assignment[nz]
    lab = point_masks[nz].astype(np.int64)
    pairs, counts = np.unique(np.stack([sv, lab], axis=1), axis=0, return_counts=True)
    order = np.lexsort((pairs[:, 1], -counts, pairs[:, 0]))
    _, first = np.unique(pairs[order, 0], return_index=True)
    win = order[first]
    out[pairs[win, 0]] = pairs[win, 1]
    return out


def assign_view_masks(
    rescan: PointCloud,
    views: List[CameraView],
    graph: SupervoxelGraph,
    rendered_rescan_depths: List[DepthImage],
    source: str,
    depth_tol: float = DEFAULT_DEPTH_TOL,
) -> MaskAssignment:
    """Runs point- and supervoxel-level assignment for every view with
    a label image of the given source."""
    per_view = {}
    for vid, (view, depth) in enumerate(zip(views, rendered_rescan_depths)):
        if source not in view.labels:
            continue
        pm = assign_point_masks(rescan, view, view.labels[source], depth, depth_tol)
        per_view[vid] = supervoxel_mask(graph, pm)
    return MaskAssignment(source=source, per_view=per_view)


def same_mask_edges(graph: SupervoxelGraph, assignments: List[MaskAssignment]) -> EdgeWeights:
    """phi(i,j) = 1 iff i and j share a nonzero mask in any view of any
    source (OR-combined), else 0."""
    if not any(a.per_view for a in assignments):
        raise ValueError("need at least one view's mask assignment")
    a = graph.edges[:, 0]
    b = graph.edges[:, 1]
    phi = np.zeros(len(graph.edges), dtype=np.float64)
    for assignment in assignments:
        for sv_masks in assignment.per_view.values():
            ma = sv_masks[a]
            phi = np.maximum(phi, ((ma == sv_masks[b]) & (ma != 0)).astype(np.float64))
    return EdgeWeights(values=phi, mode="same_mask")


def photoconsistency_weights(graph: SupervoxelGraph, gamma: float = 1.0) -> EdgeWeights:
    """Continuous weight gamma / (||c_i - c_j||^2 + 1) from supervoxel
    mean colors; the color-similarity baseline alternative to masks."""
    if any(sv.mean_color is None for sv in graph.supervoxels):
        raise ValueError("photoconsistency weights need per-point colors")
    colors = np.stack([sv.mean_color for sv in graph.supervoxels])
    ca = colors[graph.edges[:, 0]]
    cb = colors[graph.edges[:, 1]]
    d2 = np.sum((ca - cb) ** 2, axis=1)
    return EdgeWeights(values=gamma / (d2 + 1.0), mode="photoconsistency")

"""Initial change detection by depth render-and-compare.

Depth pairs rendered from shared poses are subtracted, thresholded, and
the surviving pixels are back-projected onto the rescan cloud.  The
resulting seed set is deliberately incomplete: it marks where depth
changed, not whole objects; propagation happens downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .core import CameraView, DepthImage, PointCloud, unproject_pixels

DEFAULT_SNAP_RADIUS = 0.03


@dataclass(frozen=True)
class ResidualImage:
    """|d_ref - d_rescan| per pixel; valid only where both depths are."""

    residuals: np.ndarray
    valid: np.ndarray

    @property
    def width(self) -> int:
        return self.residuals.shape[1]

    @property
    def height(self) -> int:
        return self.residuals.shape[0]


@dataclass(frozen=True)
class ThresholdPolicy:
    """Residual thresholding rule.

    fixed: flag pixels with residual > tau_fixed.
    robust_mad: per image pair, tau = max(tau_min, mad_k * MAD of valid
    residuals); a parameter-transparent stand-in for the unspecified
    robust thresholding of the original initial-detection method.
    """

    mode: str = "fixed"
    tau_fixed: float = 0.10
    mad_k: float = 6.0
    tau_min: float = 0.05

    def __post_init__(self):
        if self.mode not in ("fixed", "robust_mad"):
            raise ValueError(f"unknown threshold mode '{self.mode}'")
        if self.tau_fixed <= 0 or self.mad_k <= 0 or self.tau_min <= 0:
            raise ValueError("thresholds must be positive")


@dataclass(frozen=True)
class SeedSet:
    """Rescan point indices flagged as changing, with pixel provenance.

    provenance rows are (view_id, u, v, point_index); every seed index
    appears in at least one row.
    """

    point_indices: np.ndarray
    provenance: List[Tuple[int, int, int, int]] = field(default_factory=list)

    def __post_init__(self):
        idx = np.unique(np.asarray(self.point_indices, dtype=np.int64))
        idx.setflags(write=False)
        object.__setattr__(self, "point_indices", idx)

    def __len__(self) -> int:
        return len(self.point_indices)


def depth_residual(ref_depth: DepthImage, rescan_depth: DepthImage) -> ResidualImage:
    if ref_depth.values.shape != rescan_depth.values.shape:
        raise ValueError(
            f"depth dimensions differ: {ref_depth.values.shape} vs {rescan_depth.values.shape}"
        )
    valid = ref_depth.valid() & rescan_depth.valid()
    residuals = np.where(valid, np.abs(ref_depth.values - rescan_depth.values), 0.0)
    return ResidualImage(residuals=residuals, valid=valid)


def threshold(residual: ResidualImage, policy: ThresholdPolicy) -> np.ndarray:
    vals = residual.residuals[residual.valid]
    if policy.mode == "fixed":
        tau = policy.tau_fixed
    else:
        if len(vals) == 0:
            return np.zeros_like(residual.valid)
        med = np.median(vals)
        mad = np.median(np.abs(vals - med))
        tau = max(policy.tau_min, policy.mad_k * mad)
    return residual.valid & (residual.residuals > tau)


def backproject_seeds(
    flagged: np.ndarray,
    rescan_depth: DepthImage,
    view: CameraView,
    rescan: PointCloud,
    snap_radius: float = DEFAULT_SNAP_RADIUS,
    view_id: int = 0,
    tree: cKDTree = None,
) -> SeedSet:
    """Lifts flagged pixels to rescan point indices.

    Each flagged pixel with valid rescan depth is unprojected, mapped to
    world coordinates, and snapped to the nearest rescan point within
    snap_radius; pixels with no point that close are dropped.
    """
    usable = flagged & rescan_depth.valid()
    vs, us = np.nonzero(usable)
    if len(us) == 0:
        return SeedSet(np.empty(0, dtype=np.int64))
    cam = unproject_pixels(us.astype(np.float64), vs.astype(np.float64),
                           rescan_depth.values[vs, us], view.intrinsics)
    world = view.pose.camera_to_world(cam)
    if tree is None:
        tree = cKDTree(rescan.positions)
    dist, idx = tree.query(world, distance_upper_bound=snap_radius)
    hit = np.isfinite(dist)
    provenance = [
        (view_id, int(u), int(v), int(p)) for u, v, p in zip(us[hit], vs[hit], idx[hit])
    ]
    return SeedSet(idx[hit].astype(np.int64), provenance)


def accumulate(seed_sets) -> SeedSet:
    """Union of per-view seed sets, provenance concatenated."""
    if not seed_sets:
        return SeedSet(np.empty(0, dtype=np.int64))
    indices = np.concatenate([s.point_indices for s in seed_sets])
    provenance = [row for s in seed_sets for row in s.provenance]
    return SeedSet(indices, provenance)


def detect_seeds(
    ref_depths,
    rescan_depths,
    views,
    rescan: PointCloud,
    policy: ThresholdPolicy = ThresholdPolicy(),
    snap_radius: float = DEFAULT_SNAP_RADIUS,
) -> SeedSet:
    """Full seed stage over all views given pre-rendered depth pairs."""
    tree = cKDTree(rescan.positions)
    per_view = []
    for vid, (dref, dres, view) in enumerate(zip(ref_depths, rescan_depths, views)):
        flagged = threshold(depth_residual(dref, dres), policy)
        per_view.append(
            backproject_seeds(flagged, dres, view, rescan, snap_radius, view_id=vid, tree=tree)
        )
    return accumulate(per_view)

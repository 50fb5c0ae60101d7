"""From changed-supervoxel labels to scored object detections.

Changed supervoxels are flattened to their points, split into connected
components on a coarse voxel grid (so nearby fragments of one object
merge), size-filtered, and scored by seed density.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .core import PointCloud
from .seeds import SeedSet
from .supervoxels import SupervoxelGraph
from .voxelgrid import group_components

DEFAULT_CC_STEP = 0.10
DEFAULT_MIN_POINTS = 50


@dataclass(frozen=True)
class Detection:
    id: int
    point_indices: np.ndarray
    score: float

    def __post_init__(self):
        idx = np.asarray(self.point_indices, dtype=np.int64)
        if len(idx) == 0:
            raise ValueError("a detection cannot be empty")
        if not np.isfinite(self.score):
            raise ValueError("detection score must be finite")
        idx.setflags(write=False)
        object.__setattr__(self, "point_indices", idx)

    def bbox(self, cloud: PointCloud) -> np.ndarray:
        """Axis-aligned (2, 3) min/max corners of the detection points."""
        pts = cloud.positions[self.point_indices]
        return np.stack([pts.min(axis=0), pts.max(axis=0)])


@dataclass(frozen=True)
class DetectionSet:
    detections: List[Detection]
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.detections)


def changed_points(graph: SupervoxelGraph, changing: np.ndarray) -> np.ndarray:
    """Union of point indices of supervoxels labeled changing."""
    changing = np.asarray(changing, dtype=bool)
    if len(changing) != graph.n_supervoxels:
        raise ValueError("labels must cover every supervoxel")
    return np.nonzero(changing[graph.assignment])[0]


def connected_components(
    point_indices: np.ndarray,
    cloud: PointCloud,
    step: float = DEFAULT_CC_STEP,
    min_points: int = DEFAULT_MIN_POINTS,
) -> List[np.ndarray]:
    """26-connected components of the selected points on a `step` grid,
    keeping only components with at least min_points points."""
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    groups = group_components(point_indices, cloud.positions, step)
    return [g for g in groups if len(g) >= min_points]


def score_detections(groups: List[np.ndarray], seeds: SeedSet, params: dict = None) -> DetectionSet:
    """Scores each component by seed density and orders the result by
    descending score, then descending size, then first point index."""
    seed_idx = set(seeds.point_indices.tolist())
    scored = []
    for g in groups:
        inside = sum(1 for i in g.tolist() if i in seed_idx)
        scored.append((inside / len(g), g))
    scored.sort(key=lambda t: (-t[0], -len(t[1]), int(t[1][0])))
    detections = [Detection(id=i, point_indices=g, score=s) for i, (s, g) in enumerate(scored)]
    return DetectionSet(detections=detections, params=dict(params or {}))


def build_detections(
    graph: SupervoxelGraph,
    changing: np.ndarray,
    cloud: PointCloud,
    seeds: SeedSet,
    step: float = DEFAULT_CC_STEP,
    min_points: int = DEFAULT_MIN_POINTS,
    params: dict = None,
) -> DetectionSet:
    """Full postprocess stage: gather, split, filter, score."""
    pts = changed_points(graph, changing)
    groups = connected_components(pts, cloud, step=step, min_points=min_points)
    return score_detections(groups, seeds, params=params)

"""Unsupervised 3D change detection between a reference scan and a rescan.

The pipeline seeds change hypotheses by rendering the reference scan into
the rescan's camera poses and comparing depth, then propagates those
seeds over a supervoxel adjacency graph under 2D segmentation-mask
constraints, solved as a generalized minimal partition problem.
"""

from .config import PipelineConfig, load_config, save_config
from .core import (
    CameraView,
    DepthImage,
    Intrinsics,
    LabelImage,
    PointCloud,
    Pose,
    TriMesh,
    project,
    project_points,
    transform,
    unproject,
)
from .pipeline import run_pipeline, sweep_pipeline

__version__ = "0.1.0"

__all__ = [
    "CameraView",
    "DepthImage",
    "Intrinsics",
    "LabelImage",
    "PipelineConfig",
    "PointCloud",
    "Pose",
    "TriMesh",
    "load_config",
    "project",
    "project_points",
    "run_pipeline",
    "save_config",
    "sweep_pipeline",
    "transform",
    "unproject",
    "__version__",
]

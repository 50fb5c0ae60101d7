"""Batch mask extraction over a scene's image directories.

The input directory follows the engine's scene layout: a color/ and/or
depth/ subdirectory holding one image per view. Each image yields one
16-bit label map under out/labels/<source>/, and out/label_paths.json
records the relative paths keyed by source and view stem, ready to merge
into a scan manifest's per-view label_paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from PIL import UnidentifiedImageError

from . import labelmaps
from .backends import SamBackend

SOURCES = ("color", "depth", "both")
_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".pgm")


@dataclass(frozen=True)
class ExtractionConfig:
    """What to segment and where to put the results.

    crop_levels None leaves the backend's crop schedule at its default.
    """

    images: Path
    source: str = "color"
    grid_side: int = 32
    crop_levels: Optional[int] = None
    out: Path = field(default_factory=lambda: Path("masks"))

    def __post_init__(self) -> None:
        object.__setattr__(self, "images", Path(self.images))
        object.__setattr__(self, "out", Path(self.out))
        if self.source not in SOURCES:
            raise ValueError(f"unknown source '{self.source}' (expected one of {SOURCES})")
        if self.grid_side < 1:
            raise ValueError("grid_side must be >= 1")
        if self.crop_levels is not None and self.crop_levels < 0:
            raise ValueError("crop_levels must be >= 0")


def _list_images(directory: Path) -> list:
    if not directory.is_dir():
        return []
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)


def _load_for_backend(path: Path, source: str) -> np.ndarray:
    try:
        if source == "color":
            return labelmaps.load_color(path)
        depth = labelmaps.load_image16(path)
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"unreadable image {path}: {exc}") from exc
    d8 = labelmaps.depth_to_8bit(depth)
    return np.repeat(d8[:, :, None], 3, axis=2)


def extract(config: ExtractionConfig, backend=None) -> Dict[str, Dict[str, str]]:
    """Segment every image and write label maps plus a manifest patch.

    Returns {source: {view stem: relative label path}}, the same mapping
    written to out/label_paths.json. With backend None a SamBackend is
    constructed, which requires local model weights.
    """
    if backend is None:
        backend = SamBackend(weights=None, grid_side=config.grid_side,
                             crop_levels=config.crop_levels)
    sources = ("color", "depth") if config.source == "both" else (config.source,)
    patch: Dict[str, Dict[str, str]] = {}
    for source in sources:
        src_dir = config.images / source
        files = _list_images(src_dir)
        if not files:
            raise FileNotFoundError(f"no {source} images under {src_dir}")
        for path in files:
            image = _load_for_backend(path, source)
            proposals = backend.propose(image)
            labels = labelmaps.flatten_proposals(proposals, image.shape[:2])
            rel = f"labels/{source}/{path.stem}.png"
            labelmaps.save_labels(config.out / rel, labels)
            patch.setdefault(source, {})[path.stem] = rel
    patch_path = config.out / "label_paths.json"
    patch_path.parent.mkdir(parents=True, exist_ok=True)
    with open(patch_path, "w") as handle:
        json.dump({"label_paths": patch}, handle, indent=2)
        handle.write("\n")
    return patch

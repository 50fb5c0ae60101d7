"""Flattening overlapping proposals into label maps, plus image helpers."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .backends import MaskProposal

MAX_IDS = 0xFFFF


def flatten_proposals(proposals: Sequence[MaskProposal], shape) -> np.ndarray:
    """Merge overlapping proposals into one uint16 label map.

    Pixels claimed by several proposals go to the highest confidence
    (ties broken by proposal order). Ids are contiguous from 1 in paint
    order; proposals left without any pixel get no id. 0 means unmasked.
    """
    shape = tuple(shape)
    if len(shape) != 2:
        raise ValueError("shape must be (height, width)")
    out = np.zeros(shape, dtype=np.uint16)
    order = sorted(range(len(proposals)), key=lambda i: (-proposals[i].confidence, i))
    next_id = 1
    for idx in order:
        mask = np.asarray(proposals[idx].mask, dtype=bool)
        if mask.shape != shape:
            raise ValueError(f"proposal mask shape {mask.shape} does not match image {shape}")
        # high-confidence masks were painted first, so only free pixels remain
        free = mask & (out == 0)
        if not free.any():
            continue
        if next_id > MAX_IDS:
            raise ValueError(f"more than {MAX_IDS} masks in one image")
        out[free] = next_id
        next_id += 1
    return out


def depth_to_8bit(depth: np.ndarray) -> np.ndarray:
    """Per-image min-max normalization of a depth map to uint8.

    A constant image maps to all zeros. The mapping is affine, so pixel
    ordering is preserved.
    """
    depth = np.asarray(depth, dtype=np.float64)
    lo = float(depth.min())
    hi = float(depth.max())
    if hi <= lo:
        return np.zeros(depth.shape, dtype=np.uint8)
    return np.rint((depth - lo) / (hi - lo) * 255.0).astype(np.uint8)


def save_labels(path, labels: np.ndarray) -> None:
    """Write a label map as a 16-bit grayscale PNG."""
    path = Path(path)
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("label map must be 2-d")
    if labels.min(initial=0) < 0 or labels.max(initial=0) > MAX_IDS:
        raise ValueError("label ids must fit in 16 bits")
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(labels.astype(np.uint16)).save(path)


def load_image16(path) -> np.ndarray:
    """Read a 16-bit grayscale image (depth or labels) as uint16."""
    with Image.open(path) as img:
        return np.asarray(img).astype(np.uint16)


def load_color(path) -> np.ndarray:
    """Read a color image as (h, w, 3) uint8."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))

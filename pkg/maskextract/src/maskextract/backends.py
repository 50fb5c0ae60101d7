"""Segmentation backends producing class-agnostic mask proposals.

A backend takes an RGB uint8 image and returns a list of MaskProposal.
Proposals may overlap; flattening them into a single label map happens
downstream. Two backends are provided: SamBackend wraps the
segment-anything automatic mask generator, IntensityRegionBackend is a
dependency-free fallback that segments by intensity bands and connected
components. The fallback is deterministic, which also makes it the
backend of choice for tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class MaskProposal:
    """One proposed region: a boolean mask and the backend's confidence."""

    mask: np.ndarray
    confidence: float


def _as_gray(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 3:
        return image.astype(np.float64).mean(axis=2)
    return image.astype(np.float64)


class IntensityRegionBackend:
    """Quantize intensity into bands, split bands into connected regions.

    Crude but fully deterministic: the same image always yields the same
    proposals in the same order. Confidence is the region's area fraction,
    so larger regions win overlap resolution (bands cannot overlap, but the
    ordering still fixes label numbering).
    """

    def __init__(self, levels: int = 4, min_region: int = 1):
        if levels < 1:
            raise ValueError("levels must be >= 1")
        if min_region < 1:
            raise ValueError("min_region must be >= 1")
        self.levels = levels
        self.min_region = min_region

    def propose(self, image: np.ndarray) -> List[MaskProposal]:
        gray = _as_gray(image)
        # digitize with interior bin edges: values land in 0..levels-1
        edges = np.linspace(0.0, 256.0, self.levels + 1)[1:-1]
        bands = np.digitize(gray, edges)
        total = gray.size
        proposals: List[MaskProposal] = []
        for band in range(self.levels):
            in_band = bands == band
            if not in_band.any():
                continue
            labeled, n_regions = ndimage.label(in_band)
            for region in range(1, n_regions + 1):
                mask = labeled == region
                area = int(mask.sum())
                if area < self.min_region:
                    continue
                proposals.append(MaskProposal(mask=mask, confidence=area / total))
        return proposals


class SamBackend:
    """Automatic mask generation with a segment-anything checkpoint.

    grid_side controls the prompt grid (points_per_side); crop_levels
    passes through to crop_n_layers, None keeps the generator's default
    crop schedule.
    """

    def __init__(
        self,
        weights,
        model_type: str = "vit_h",
        grid_side: int = 32,
        crop_levels: Optional[int] = None,
    ):
        if grid_side < 1:
            raise ValueError("grid_side must be >= 1")
        try:
            from segment_anything import SamAutomaticMaskGenerator, sam_model_registry
        except ImportError as exc:
            raise ImportError(
                "the sam backend requires the segment-anything package and torch; "
                "install with 'pip install maskextract[sam]' or use the regions backend"
            ) from exc
        weights = Path(weights) if weights is not None else None
        if weights is None or not weights.is_file():
            raise FileNotFoundError(
                f"model weights not found: {weights}; download a SAM checkpoint "
                "(e.g. sam_vit_h_4b8939.pth) and pass its path"
            )
        model = sam_model_registry[model_type](checkpoint=str(weights))
        kwargs = {"points_per_side": grid_side}
        if crop_levels is not None:
            kwargs["crop_n_layers"] = crop_levels
        self._generator = SamAutomaticMaskGenerator(model, **kwargs)

    def propose(self, image: np.ndarray) -> List[MaskProposal]:
        image = np.asarray(image)
        if image.ndim == 2:
            image = np.repeat(image[:, :, None], 3, axis=2)
        records = self._generator.generate(image)
        return [
            MaskProposal(mask=np.asarray(r["segmentation"], dtype=bool),
                         confidence=float(r["predicted_iou"]))
            for r in records
        ]

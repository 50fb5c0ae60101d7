"""maskextract: 2D instance masks and scan manifests for change detection.

Two entry points: extract() runs a segmentation backend over a scene's
images and writes 16-bit label maps the engine can consume as mask
constraints; convert_3rscan() rewrites 3RScan-style scene directories in
the engine's manifest format.
"""

from .backends import IntensityRegionBackend, MaskProposal, SamBackend
from .convert import convert_3rscan
from .extract import ExtractionConfig, extract
from .labelmaps import depth_to_8bit, flatten_proposals
from .plyio import Cloud, read_cloud, write_cloud

__all__ = [
    "Cloud",
    "ExtractionConfig",
    "IntensityRegionBackend",
    "MaskProposal",
    "SamBackend",
    "convert_3rscan",
    "depth_to_8bit",
    "extract",
    "flatten_proposals",
    "read_cloud",
    "write_cloud",
]

__version__ = "0.1.0"

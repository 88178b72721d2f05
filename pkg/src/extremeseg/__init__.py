"""Minimally interactive 3D tumor segmentation engine.

Pipeline: six extreme-boundary clicks -> ROI crop -> exponentialized
geodesic distance map -> small 3D U-Net ensemble -> post-processing ->
agreement statistics. Includes a deterministic phantom generator for
desk-scale training, a CLI, and an HTTP service for the slice-viewer UI.
"""

from .geometry import Geometry, GeometryError, voxel_from_world, world_from_voxel
from .volume import Mask3D, Volume3D

__version__ = "0.1.0"

__all__ = [
    "Geometry",
    "GeometryError",
    "Mask3D",
    "Volume3D",
    "voxel_from_world",
    "world_from_voxel",
    "__version__",
]

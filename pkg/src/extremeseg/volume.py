"""Volume3D and Mask3D, the image and label carriers.

Both are immutable after construction (arrays are write-locked) and safe to
share between concurrent readers.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import Geometry

MODALITIES = ("CT", "MR_T1", "MR_T2FS", "SYNTH")


@dataclass(frozen=True, eq=False)
class Volume3D:
    """Scalar image on a Geometry grid; voxels stored float32 internally."""

    geometry: Geometry
    values: np.ndarray  # (nx, ny, nz)
    modality: str = "SYNTH"
    source_dtype: str = "f32"  # on-disk dtype this volume was loaded from

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.shape != self.geometry.dims:
            raise ValueError(
                f"values shape {values.shape} != dims {self.geometry.dims}")
        if not np.all(np.isfinite(values)):
            raise ValueError("volume contains non-finite values")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.source_dtype not in ("f32", "i16", "u8"):
            raise ValueError(f"unknown source dtype {self.source_dtype!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class Mask3D:
    """Binary labels on a Geometry grid."""

    geometry: Geometry
    labels: np.ndarray  # (nx, ny, nz) in {0, 1}

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels)
        if labels.shape != self.geometry.dims:
            raise ValueError(
                f"labels shape {labels.shape} != dims {self.geometry.dims}")
        as_u8 = labels.astype(np.uint8)
        if not np.array_equal(as_u8, labels) or np.any(as_u8 > 1):
            raise ValueError("mask labels must be exactly 0 or 1")
        as_u8.setflags(write=False)
        object.__setattr__(self, "labels", as_u8)

    @property
    def voxel_count(self) -> int:
        return int(self.labels.sum())

    def is_empty(self) -> bool:
        return not bool(self.labels.any())

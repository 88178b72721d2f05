"""Voxel grid geometry and the voxel<->world coordinate maps."""

from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Geometry:
    """Physical layout of a voxel grid.

    dims are voxel counts with x fastest-varying in flat storage; spacing is
    mm per voxel; direction is a row-major 3x3 orthonormal matrix mapping
    voxel axes to world axes.
    """

    dims: tuple
    spacing: tuple
    origin: tuple = (0.0, 0.0, 0.0)
    direction: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        direction = np.asarray(self.direction, dtype=np.float64)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise GeometryError(f"dims must be 3 positive ints, got {self.dims}")
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise GeometryError(f"spacing must be 3 positive reals, got {self.spacing}")
        if len(origin) != 3 or any(not np.isfinite(o) for o in origin):
            raise GeometryError(f"origin must be 3 finite reals, got {self.origin}")
        if direction.shape != (3, 3) or not np.all(np.isfinite(direction)):
            raise GeometryError("direction must be a finite 3x3 matrix")
        if abs(abs(np.linalg.det(direction)) - 1.0) > 1e-6:
            raise GeometryError("direction must have |det| = 1 within 1e-6")
        if not np.allclose(direction @ direction.T, np.eye(3), atol=1e-4):
            raise GeometryError("direction must be orthonormal")
        direction.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)

    def __eq__(self, other):
        if not isinstance(other, Geometry):
            return NotImplemented
        return (self.dims == other.dims
                and np.allclose(self.spacing, other.spacing, atol=1e-9)
                and np.allclose(self.origin, other.origin, atol=1e-9)
                and np.allclose(self.direction, other.direction, atol=1e-9))

    @property
    def voxel_count(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def anisotropy_ratio(self) -> float:
        return max(self.spacing) / min(self.spacing)


def world_from_voxel(g: Geometry, v) -> np.ndarray:
    """World point (mm) of voxel center v = origin + direction @ (v * spacing)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise IndexError(f"expected a voxel triple, got shape {v.shape}")
    eps = 1e-9  # tolerate round-trip float noise at the grid boundary
    if np.any(v < -eps) or np.any(v > np.asarray(g.dims) - 1 + eps):
        raise IndexError(f"voxel {tuple(v)} outside dims {g.dims}")
    return _world_from_voxel_unchecked(g, v)


def _world_from_voxel_unchecked(g: Geometry, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.asarray(g.origin) + g.direction @ (v * np.asarray(g.spacing))


def voxel_from_world(g: Geometry, p) -> np.ndarray:
    """Continuous voxel coordinates of world point p; may lie off-grid."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"expected a world triple, got shape {p.shape}")
    return (g.direction.T @ (p - np.asarray(g.origin))) / np.asarray(g.spacing)

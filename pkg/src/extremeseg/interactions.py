"""Everything derived from the six user clicks.

Synthetic click placement from a reference mask (extreme voxels nudged
inward), ROI extraction with boundary relaxation and divisibility padding,
and the exponentialized geodesic distance map that feeds the network.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import accel
from .volume import Mask3D

AXES = ("x", "y", "z")
SIDES = ("min", "max")
INWARD_VOX = 5          # in-plane inward shift of a synthetic click
INWARD_VOX_LOWRES = 1   # shift along the out-of-plane axis when anisotropic
ANISO_RATIO = 3.0
RELAXATION = 0.1


class InteractionError(ValueError):
    pass


@dataclass(frozen=True)
class ClickPoint:
    space: str   # "world" | "voxel"
    coords: tuple
    axis: str    # extreme along this axis
    side: str    # "min" | "max"

    def __post_init__(self):
        if self.space not in ("world", "voxel"):
            raise InteractionError(f"bad space {self.space!r}")
        if self.axis not in AXES or self.side not in SIDES:
            raise InteractionError(f"bad axis/side {self.axis!r}/{self.side!r}")
        coords = tuple(float(c) for c in self.coords)
        if len(coords) != 3 or not all(math.isfinite(c) for c in coords):
            raise InteractionError(f"bad coords {self.coords!r}")
        object.__setattr__(self, "coords", coords)


@dataclass(frozen=True)
class InteractionSet:
    points: tuple  # exactly 6 ClickPoints, one min and one max per axis

    def __post_init__(self):
        pts = tuple(self.points)
        if len(pts) != 6:
            raise InteractionError(f"expected 6 points, got {len(pts)}")
        tags = {(p.axis, p.side) for p in pts}
        if len(tags) != 6:
            raise InteractionError("points must cover one min and one max per axis")
        object.__setattr__(self, "points", pts)

    @property
    def space(self) -> str:
        spaces = {p.space for p in self.points}
        if len(spaces) != 1:
            raise InteractionError("mixed coordinate spaces in one set")
        return next(iter(spaces))

    def coords_array(self) -> np.ndarray:
        return np.array([p.coords for p in self.points], dtype=np.float64)

    def to_json(self) -> str:
        return json.dumps([{"space": p.space, "coords": list(p.coords),
                            "axis": p.axis, "side": p.side}
                           for p in self.points], indent=1)

    @classmethod
    def from_json(cls, text: str) -> "InteractionSet":
        try:
            entries = json.loads(text)
        except json.JSONDecodeError as e:
            raise InteractionError(f"clicks file is not valid JSON: {e}") from e
        if not isinstance(entries, list):
            raise InteractionError("clicks file must be a JSON array")
        return cls(points=tuple(
            ClickPoint(space=e["space"], coords=tuple(e["coords"]),
                       axis=e["axis"], side=e["side"])
            for e in entries))


@dataclass(frozen=True)
class RoiBox:
    """Inclusive voxel bounds in the preprocessed grid, plus zero padding."""
    lo: tuple
    hi: tuple
    pad_lo: tuple
    pad_hi: tuple

    def __post_init__(self):
        for l, h in zip(self.lo, self.hi):
            if l > h:
                raise InteractionError(f"roi lo {self.lo} > hi {self.hi}")

    @property
    def size(self) -> tuple:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def padded_size(self) -> tuple:
        return tuple(s + pl + ph for s, pl, ph
                     in zip(self.size, self.pad_lo, self.pad_hi))


@dataclass(frozen=True)
class EgdMap:
    values: np.ndarray  # in (0, 1]; exactly 1 at the seeds
    lam: float
    nu: float
    connectivity: int = 6


def synth_extreme_points(mask: Mask3D) -> InteractionSet:
    """Simulate the six clicks from a reference mask.

    Per axis, the voxel attaining the extreme coordinate that is nearest the
    mask centroid in the orthogonal plane is moved inward by 5 voxels
    (1 voxel along the out-of-plane axis when the grid is anisotropic,
    spacing ratio > 3), stepping back out if it leaves the mask.
    """
    if mask.is_empty():
        raise InteractionError("cannot place clicks on an empty mask")
    idx = np.argwhere(mask.labels > 0)
    centroid = idx.mean(axis=0)
    spacing = np.asarray(mask.geometry.spacing)
    out_axis = int(np.argmax(spacing)) \
        if spacing.max() / spacing.min() > ANISO_RATIO else -1
    labels = mask.labels
    points = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for side in SIDES:
            extreme = idx[:, axis].min() if side == "min" else idx[:, axis].max()
            cands = idx[idx[:, axis] == extreme]
            plane_d2 = ((cands[:, others] - centroid[others]) ** 2).sum(axis=1)
            order = np.lexsort((cands[:, others[1]], cands[:, others[0]], plane_d2))
            pt = cands[order[0]].copy()
            inward = INWARD_VOX_LOWRES if axis == out_axis else INWARD_VOX
            step = 1 if side == "min" else -1
            pt[axis] += step * inward
            while pt[axis] != extreme and not (
                    0 <= pt[axis] < labels.shape[axis]
                    and labels[tuple(pt)] > 0):
                pt[axis] -= step
            points.append(ClickPoint(space="voxel", coords=tuple(float(c) for c in pt),
                                     axis=AXES[axis], side=side))
    return InteractionSet(points=tuple(points))


def roi_from_points(points: InteractionSet, divisors, image_dims,
                    relaxation: float = RELAXATION) -> RoiBox:
    """Bounding box of the clicks, relaxed by ceil(relaxation * size) per
    side, then grown to per-axis divisibility (in-image first, zero padding
    once the image is exhausted)."""
    if points.space != "voxel":
        raise InteractionError("roi_from_points expects voxel-space points")
    coords = points.coords_array()
    lo = [int(v) for v in np.rint(coords.min(axis=0))]
    hi = [int(v) for v in np.rint(coords.max(axis=0))]
    lo = [min(max(v, 0), d - 1) for v, d in zip(lo, image_dims)]
    hi = [min(max(v, 0), d - 1) for v, d in zip(hi, image_dims)]
    pad_lo = [0, 0, 0]
    pad_hi = [0, 0, 0]
    for a, dim in enumerate(image_dims):
        if relaxation > 0:
            grow = math.ceil(relaxation * (hi[a] - lo[a] + 1))
            lo[a] = max(lo[a] - grow, 0)
            hi[a] = min(hi[a] + grow, dim - 1)
        div = int(divisors[a])
        need = (-(hi[a] - lo[a] + 1)) % div
        for i in range(need):
            prefer_lo = i % 2 == 0
            if prefer_lo and lo[a] > 0:
                lo[a] -= 1
            elif not prefer_lo and hi[a] < dim - 1:
                hi[a] += 1
            elif lo[a] > 0:
                lo[a] -= 1
            elif hi[a] < dim - 1:
                hi[a] += 1
            elif prefer_lo:
                pad_lo[a] += 1
            else:
                pad_hi[a] += 1
    return RoiBox(lo=tuple(lo), hi=tuple(hi),
                  pad_lo=tuple(pad_lo), pad_hi=tuple(pad_hi))


def egd_map(roi_values: np.ndarray, roi_spacing, seeds, lam: float = 1.0,
            nu: float = 1.0) -> EgdMap:
    """Exponentialized geodesic distance from the seed voxels.

    D(v) is the exact 6-connected shortest path cost with edge weight
    (1-lam)*dist_mm + lam*|dI|; the map is exp(-nu * D), 1 at seeds.
    """
    seeds = np.asarray(seeds, dtype=np.int64)
    dist = accel.geodesic_distance(roi_values, roi_spacing, seeds, lam)
    return EgdMap(values=np.exp(-nu * dist), lam=lam, nu=nu)

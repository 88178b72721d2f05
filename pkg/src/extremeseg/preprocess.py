"""Executes a PipelinePlan on a case.

Fixed order: resample -> remap points -> ROI from points -> crop/pad ->
normalize -> EGD. The inverse map records everything needed to take a mask
predicted on the ROI grid back to the original grid.

Cubic resampling is separable Catmull-Rom (a = -0.5), pinned here because
"third-order spline" alone does not determine the kernel; identity
resampling short-circuits to a bit-exact copy.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Geometry, _world_from_voxel_unchecked, voxel_from_world
from .interactions import (ClickPoint, EgdMap, InteractionSet, RoiBox,
                           egd_map, roi_from_points)
from .planner import ANISO_RATIO, PipelinePlan
from .volume import Mask3D, Volume3D


class PreprocessError(ValueError):
    pass


def _catmull_rom_weights(f):
    f2 = f * f
    f3 = f2 * f
    return (-0.5 * f + f2 - 0.5 * f3,
            1.0 - 2.5 * f2 + 1.5 * f3,
            0.5 * f + 2.0 * f2 - 1.5 * f3,
            -0.5 * f2 + 0.5 * f3)


def _resample_axis(arr, axis, n_out, scale, kind):
    """1D resample along one axis; output index j samples input at j*scale."""
    n_in = arr.shape[axis]
    if n_out == n_in and scale == 1.0:
        return arr
    x = np.arange(n_out, dtype=np.float64) * scale
    shape = [1, 1, 1]
    shape[axis] = n_out
    if kind == "nearest":
        idx = np.clip(np.rint(x).astype(np.int64), 0, n_in - 1)
        return np.take(arr, idx, axis=axis)
    i0 = np.floor(x).astype(np.int64)
    f = x - i0
    if kind == "linear":
        a = np.take(arr, np.clip(i0, 0, n_in - 1), axis=axis)
        b = np.take(arr, np.clip(i0 + 1, 0, n_in - 1), axis=axis)
        fr = f.reshape(shape)
        return a * (1.0 - fr) + b * fr
    if kind == "cubic":
        weights = _catmull_rom_weights(f)
        out = None
        for tap, w in enumerate(weights, start=-1):
            part = np.take(arr, np.clip(i0 + tap, 0, n_in - 1), axis=axis)
            term = part * w.reshape(shape)
            out = term if out is None else out + term
        return out
    raise PreprocessError(f"unknown resample kind {kind!r}")


def _resampled_dims(geometry, target):
    out = np.rint(np.asarray(geometry.dims)
                  * np.asarray(geometry.spacing) / np.asarray(target))
    return tuple(int(max(d, 1)) for d in out)


def _resample_grid(values, geometry, target, inplane_kind):
    target = tuple(float(t) for t in target)
    spacing = np.asarray(geometry.spacing)
    out_dims = _resampled_dims(geometry, target)
    out_axis = int(np.argmax(spacing)) \
        if spacing.max() / spacing.min() > ANISO_RATIO else -1
    arr = np.asarray(values, dtype=np.float64)
    for axis in range(3):
        kind = "nearest" if axis == out_axis else inplane_kind
        arr = _resample_axis(arr, axis, out_dims[axis],
                             scale=target[axis] / spacing[axis], kind=kind)
    out_geom = Geometry(dims=out_dims, spacing=target,
                        origin=geometry.origin, direction=geometry.direction)
    return arr, out_geom


def resample_volume(vol: Volume3D, target_spacing) -> Volume3D:
    """Cubic in-plane, nearest on the out-of-plane axis when the input is
    anisotropic (spacing ratio > 3)."""
    if any(t <= 0 for t in target_spacing):
        raise PreprocessError("target spacing must be positive")
    if tuple(float(t) for t in target_spacing) == vol.geometry.spacing:
        return vol
    arr, geom = _resample_grid(vol.values, vol.geometry, target_spacing, "cubic")
    return Volume3D(geometry=geom, values=arr.astype(np.float32),
                    modality=vol.modality, source_dtype=vol.source_dtype)


def resample_mask(mask: Mask3D, target_spacing) -> Mask3D:
    """Linear in-plane (nearest out-of-plane when anisotropic), threshold 0.5."""
    if tuple(float(t) for t in target_spacing) == mask.geometry.spacing:
        return mask
    arr, geom = _resample_grid(mask.labels, mask.geometry, target_spacing,
                               "linear")
    return Mask3D(geometry=geom, labels=(arr >= 0.5).astype(np.uint8))


def remap_points(points: InteractionSet, src: Geometry,
                 dst: Geometry) -> InteractionSet:
    """Voxel->world under src, world->voxel under dst, rounded and clamped.
    World-space inputs skip the first leg."""
    out = []
    hi = np.asarray(dst.dims) - 1
    for p in points.points:
        if p.space == "voxel":
            world = _world_from_voxel_unchecked(src, p.coords)
        else:
            world = np.asarray(p.coords, dtype=np.float64)
        vox = np.clip(np.rint(voxel_from_world(dst, world)), 0, hi)
        out.append(ClickPoint(space="voxel", coords=tuple(float(v) for v in vox),
                              axis=p.axis, side=p.side))
    return InteractionSet(points=tuple(out))


def normalize_values(values, plan: PipelinePlan, modality: str,
                     interior=None) -> np.ndarray:
    """CT: clip to the plan's pooled-foreground percentiles, z-score with the
    pooled stats. MRI/SYNTH: z-score with the ROI's own mean/sd (zeros when
    degenerate). `interior` restricts both the stats and the output support
    so zero padding remains exactly zero."""
    arr = np.asarray(values, dtype=np.float64)
    region = arr[interior] if interior is not None else arr
    if modality == "CT":
        norm = plan.normalization
        if norm.get("scheme") != "ct":
            raise PreprocessError("plan lacks CT normalization stats")
        sd = norm["sd"] if norm["sd"] > 1e-8 else 1.0
        out = (np.clip(arr, norm["clip_lo"], norm["clip_hi"]) - norm["mean"]) / sd
    else:
        mean = float(region.mean())
        sd = float(region.std())
        if sd < 1e-8:
            out = np.zeros_like(arr)
        else:
            out = (arr - mean) / sd
    if interior is not None:
        masked = np.zeros_like(out)
        masked[interior] = out[interior]
        out = masked
    return out.astype(np.float32)


def crop_pad(values, roi: RoiBox) -> np.ndarray:
    """Extract [lo, hi] inclusive and apply the zero pads."""
    arr = np.asarray(values)
    for a in range(3):
        if roi.lo[a] >= arr.shape[a] or roi.hi[a] < 0:
            raise PreprocessError("roi lies entirely outside the image")
    sl = tuple(slice(l, h + 1) for l, h in zip(roi.lo, roi.hi))
    core = arr[sl]
    pads = tuple((pl, ph) for pl, ph in zip(roi.pad_lo, roi.pad_hi))
    return np.pad(core, pads)


def interior_slices(roi: RoiBox):
    return tuple(slice(pl, pl + s)
                 for pl, s in zip(roi.pad_lo, roi.size))


@dataclass(frozen=True)
class InverseMap:
    original: Geometry
    resampled: Geometry
    roi: RoiBox

    def to_json(self) -> str:
        def geom(g):
            return {"dims": list(g.dims), "spacing": list(g.spacing),
                    "origin": list(g.origin),
                    "direction": [list(r) for r in g.direction.tolist()]}
        return json.dumps({
            "format": "extremeseg-inverse-map",
            "original": geom(self.original),
            "resampled": geom(self.resampled),
            "roi": {"lo": list(self.roi.lo), "hi": list(self.roi.hi),
                    "pad_lo": list(self.roi.pad_lo),
                    "pad_hi": list(self.roi.pad_hi)},
        }, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "InverseMap":
        doc = json.loads(text)
        if doc.get("format") != "extremeseg-inverse-map":
            raise PreprocessError("not an inverse-map document")

        def geom(d):
            return Geometry(dims=tuple(d["dims"]), spacing=tuple(d["spacing"]),
                            origin=tuple(d["origin"]),
                            direction=np.asarray(d["direction"]))
        r = doc["roi"]
        return cls(original=geom(doc["original"]),
                   resampled=geom(doc["resampled"]),
                   roi=RoiBox(lo=tuple(r["lo"]), hi=tuple(r["hi"]),
                              pad_lo=tuple(r["pad_lo"]),
                              pad_hi=tuple(r["pad_hi"])))


@dataclass
class PreprocessedCase:
    image_roi: Volume3D          # normalized intensities on the ROI grid
    egd_roi: EgdMap | None       # None in automatic mode
    roi: RoiBox
    inverse_map: InverseMap
    seeds_roi: np.ndarray | None  # (6, 3) int voxel seeds inside the ROI
    target_roi: np.ndarray | None = None  # reference labels on the ROI grid
    mask_resampled: Mask3D | None = None


def _roi_geometry(resampled: Geometry, roi: RoiBox) -> Geometry:
    start = np.asarray(roi.lo, dtype=np.float64) - np.asarray(roi.pad_lo)
    origin = (np.asarray(resampled.origin)
              + resampled.direction @ (start * np.asarray(resampled.spacing)))
    return Geometry(dims=roi.padded_size, spacing=resampled.spacing,
                    origin=tuple(origin), direction=resampled.direction)


def _full_image_roi(dims, divisors) -> RoiBox:
    pad_lo = []
    pad_hi = []
    for a, dim in enumerate(dims):
        need = (-dim) % int(divisors[a])
        pad_lo.append(need // 2)
        pad_hi.append(need - need // 2)
    return RoiBox(lo=(0, 0, 0), hi=tuple(d - 1 for d in dims),
                  pad_lo=tuple(pad_lo), pad_hi=tuple(pad_hi))


def _auto_target_spacing(geometry: Geometry, plan: PipelinePlan):
    """Scale the target spacing isotropically until the whole resampled
    volume fits the automatic-mode voxel budget."""
    target = np.asarray(plan.target_spacing, dtype=np.float64)
    for _ in range(64):
        dims = _resampled_dims(geometry, tuple(target))
        count = int(np.prod(dims))
        if count <= plan.auto_budget_voxels:
            return tuple(float(t) for t in target)
        target = target * max((count / plan.auto_budget_voxels) ** (1 / 3), 1.02)
    raise PreprocessError("could not fit volume into the automatic budget")


def preprocess_case(volume: Volume3D, plan: PipelinePlan,
                    clicks: InteractionSet | None = None,
                    mask: Mask3D | None = None) -> PreprocessedCase:
    """Run the fixed preprocessing chain for one case.

    Interactive mode requires clicks; automatic mode ignores them and uses
    the whole (budget-resampled) volume as the ROI.
    """
    if plan.mode == "interactive":
        if clicks is None:
            raise PreprocessError("interactive preprocessing requires clicks")
        target = plan.target_spacing
    else:
        target = _auto_target_spacing(volume.geometry, plan)

    vol_r = resample_volume(volume, target)
    mask_r = resample_mask(mask, target) if mask is not None else None

    if plan.mode == "interactive":
        pts = remap_points(clicks, volume.geometry, vol_r.geometry)
        roi = roi_from_points(pts, plan.divisors, vol_r.geometry.dims)
        seeds = (pts.coords_array().astype(np.int64)
                 - np.asarray(roi.lo) + np.asarray(roi.pad_lo))
    else:
        roi = _full_image_roi(vol_r.geometry.dims, plan.divisors)
        seeds = None

    cropped = crop_pad(vol_r.values, roi)
    interior = interior_slices(roi)
    normalized = normalize_values(cropped, plan, volume.modality, interior)
    roi_geom = _roi_geometry(vol_r.geometry, roi)
    image_roi = Volume3D(geometry=roi_geom, values=normalized,
                         modality=volume.modality)

    egd = None
    if plan.mode == "interactive":
        if plan.egd.get("connectivity", 6) != 6:
            raise PreprocessError("only 6-connected EGD is implemented")
        egd = egd_map(normalized, target, seeds,
                      lam=plan.egd["lam"], nu=plan.egd["nu"])

    target_roi = None
    if mask_r is not None:
        target_roi = crop_pad(mask_r.labels, roi).astype(np.uint8)

    inv = InverseMap(original=volume.geometry, resampled=vol_r.geometry, roi=roi)
    return PreprocessedCase(image_roi=image_roi, egd_roi=egd, roi=roi,
                            inverse_map=inv, seeds_roi=seeds,
                            target_roi=target_roi, mask_resampled=mask_r)


def embed_roi_mask(labels_roi, inv: InverseMap) -> np.ndarray:
    """Strip pads and place the ROI labels back into the resampled grid."""
    roi = inv.roi
    interior = interior_slices(roi)
    core = np.asarray(labels_roi)[interior]
    full = np.zeros(inv.resampled.dims, dtype=np.uint8)
    sl = tuple(slice(l, h + 1) for l, h in zip(roi.lo, roi.hi))
    full[sl] = core
    return full


def nearest_resample_to(labels, src: Geometry, dst: Geometry) -> np.ndarray:
    """Nearest-neighbor resample of a label grid onto another geometry that
    shares origin and direction (the inverse of the pipeline's resampling)."""
    if not np.allclose(src.direction, dst.direction, atol=1e-9) \
            or not np.allclose(src.origin, dst.origin, atol=1e-6):
        raise PreprocessError("grids are not axis-aligned relatives")
    arr = np.asarray(labels)
    for axis in range(3):
        arr = _resample_axis(arr, axis, dst.dims[axis],
                             scale=dst.spacing[axis] / src.spacing[axis],
                             kind="nearest")
    return arr

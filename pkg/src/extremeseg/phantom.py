"""Deterministic synthetic tumor phantoms.

Each phantom is a union of 1-3 overlapping ellipsoids defined in mm space
(so anisotropic grids still carry geometrically round tumors), optionally
plus a disjoint distractor blob of identical contrast, Gaussian-blurred and
noised. All randomness comes from numpy's PCG64 generator seeded per case;
reproducibility is guaranteed within a build.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .geometry import Geometry
from .volume import Mask3D, Volume3D

# radius of the main ellipsoid, as a fraction of the smallest grid extent
# (mm). The lower bound keeps the click-to-size ratio in the regime the
# interaction design expects: clicks sit 5 voxels inside the extremes, and
# the 0.1 ROI relaxation can only recover that rim for sufficiently large
# objects (clinical tumors span 50+ in-plane voxels; tiny blobs would be
# clipped by their own ROI).
RADIUS_FRAC_RANGE = (0.24, 0.30)
# per-axis radius multiplier (mild anisotropy of the tumor itself)
RADIUS_JITTER_RANGE = (0.9, 1.15)
# extra lobes: center offset and size relative to the main radius
LOBE_OFFSET_RANGE = (0.3, 0.6)
LOBE_RADIUS_RANGE = (0.4, 0.7)
MIN_SEPARATION_VOX = 5.0
MARGIN_VOX = 2.0


class PhantomError(ValueError):
    pass


@dataclass(frozen=True)
class PhantomConfig:
    dims: tuple = (48, 48, 24)
    spacing: tuple = (1.0, 1.0, 4.0)
    n_ellipsoids: int = 1
    contrast: float = 1.0     # tumor-minus-background intensity
    noise_sigma: float = 0.0
    blur_sigma_vox: float = 0.0
    distractor: bool = False
    seed: int = 0
    # template bounds for the per-case randomization
    radius_frac_range: tuple = RADIUS_FRAC_RANGE

    def __post_init__(self):
        if self.contrast == 0:
            raise PhantomError("contrast must be nonzero")
        if not 1 <= self.n_ellipsoids <= 3:
            raise PhantomError("n_ellipsoids must be in 1..3")
        if self.noise_sigma < 0 or self.blur_sigma_vox < 0:
            raise PhantomError("sigmas must be >= 0")
        if not 0 < self.radius_frac_range[0] <= self.radius_frac_range[1]:
            raise PhantomError("bad radius_frac_range")


@dataclass(frozen=True)
class PhantomCase:
    image: Volume3D
    mask: Mask3D
    distractor_mask: Mask3D  # empty mask when cfg.distractor is False
    seed: int


def _voxel_centers_mm(dims, spacing):
    axes = [np.arange(d) * s for d, s in zip(dims, spacing)]
    return np.meshgrid(*axes, indexing="ij")


def _random_rotation(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _ellipsoid_mask(grids, center, radii, rot):
    rel = np.stack([g - c for g, c in zip(grids, center)], axis=-1)
    local = rel @ rot  # rotate into the ellipsoid frame
    quad = ((local / np.asarray(radii)) ** 2).sum(axis=-1)
    return quad <= 1.0


def _lobed_blob(rng, grids, extent, margin, frac_range, n_lobes, scale=1.0):
    """One lobulated blob: a main ellipsoid plus overlapping lobes, placed
    uniformly over the feasible center region."""
    base_r = rng.uniform(*frac_range) * extent.min() * scale
    radii = base_r * rng.uniform(*RADIUS_JITTER_RANGE, size=3)
    free = extent / 2 - margin - radii.max()
    if np.any(free <= 0):
        return None
    center = extent / 2 + rng.uniform(-1.0, 1.0, size=3) * free
    mask = _ellipsoid_mask(grids, center, radii, _random_rotation(rng))
    for _ in range(n_lobes - 1):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        offset = direction * rng.uniform(*LOBE_OFFSET_RANGE) * radii.min()
        lobe_r = radii * rng.uniform(*LOBE_RADIUS_RANGE)
        # keep the whole lobe inside the main ellipsoid's bounding ball
        reach = np.linalg.norm(offset) + lobe_r.max()
        if reach > radii.max():
            lobe_r *= radii.max() / reach
        mask |= _ellipsoid_mask(grids, center + offset, lobe_r,
                                _random_rotation(rng))
    return mask


def generate_phantom(cfg: PhantomConfig) -> PhantomCase:
    """Build one phantom case; identical output for identical config."""
    rng = np.random.default_rng(cfg.seed)
    dims = tuple(int(d) for d in cfg.dims)
    spacing = tuple(float(s) for s in cfg.spacing)
    extent = (np.asarray(dims) - 1) * np.asarray(spacing)
    margin = MARGIN_VOX * np.asarray(spacing)
    r_hi = cfg.radius_frac_range[1] * RADIUS_JITTER_RANGE[1] * extent.min()
    if np.any(extent / 2 - margin - r_hi <= 0):
        raise PhantomError(
            f"dims {dims} cannot host an ellipsoid with a {MARGIN_VOX:g}-voxel margin")

    grids = _voxel_centers_mm(dims, spacing)
    mask = _lobed_blob(rng, grids, extent, margin, cfg.radius_frac_range,
                       cfg.n_ellipsoids)

    distractor = np.zeros(dims, dtype=bool)
    if cfg.distractor:
        distractor = _place_distractor(rng, grids, extent, margin, mask, cfg)

    image = np.zeros(dims, dtype=np.float64)
    image[mask] = cfg.contrast
    image[distractor] = cfg.contrast
    if cfg.blur_sigma_vox > 0:
        image = ndimage.gaussian_filter(image, sigma=cfg.blur_sigma_vox)
    if cfg.noise_sigma > 0:
        image = image + rng.normal(0.0, cfg.noise_sigma, size=dims)

    geometry = Geometry(dims=dims, spacing=spacing)
    return PhantomCase(
        image=Volume3D(geometry=geometry, values=image.astype(np.float32),
                       modality="SYNTH"),
        mask=Mask3D(geometry=geometry, labels=mask.astype(np.uint8)),
        distractor_mask=Mask3D(geometry=geometry,
                               labels=distractor.astype(np.uint8)),
        seed=cfg.seed,
    )


def _place_distractor(rng, grids, extent, margin, tumor, cfg):
    """Rejection-sample a decoy drawn from the same size/shape distribution
    as the tumor (so image content alone cannot tell them apart), disjoint
    and >= MIN_SEPARATION_VOX voxels away; shrinks only as a last resort."""
    dist = ndimage.distance_transform_edt(~tumor)
    scale = 1.0
    for attempt in range(120):
        blob = _lobed_blob(rng, grids, extent, margin, cfg.radius_frac_range,
                           cfg.n_ellipsoids, scale=scale)
        if blob is not None and blob.any() \
                and dist[blob].min() >= MIN_SEPARATION_VOX:
            return blob
        if attempt % 12 == 11:
            scale *= 0.85
    raise PhantomError("could not place a distractor blob; grid too crowded")


def generate_dataset(n: int, cfg_template: PhantomConfig, seed: int):
    """n cases with per-case seeds seed+0 .. seed+n-1."""
    if n < 1:
        raise PhantomError("n must be >= 1")
    return [generate_phantom(replace(cfg_template, seed=seed + i))
            for i in range(n)]

"""Training loop: Dice+CE with deep supervision, Nesterov SGD with poly LR
decay and 4-step gradient accumulation, per-epoch click jitter with EGD
recomputation, and nnU-Net-style spatial/intensity augmentation.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .. import accel
from ..interactions import egd_map
from ..planner import PipelinePlan
from ..preprocess import PreprocessedCase
from . import ops
from .unet import UNet3D, spec_from_plan


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class AugmentParams:
    p_rotate: float = 0.2
    max_rotate_deg: float = 15.0
    p_zoom: float = 0.2
    zoom_range: tuple = (0.8, 1.2)
    p_flip: float = 0.5          # per axis
    p_noise: float = 0.15
    noise_sigma_max: float = 0.1
    p_smooth: float = 0.15
    smooth_sigma: tuple = (0.5, 1.5)
    p_scale: float = 0.15
    scale_range: tuple = (0.9, 1.1)
    p_contrast: float = 0.15
    contrast_range: tuple = (0.75, 1.25)

    @classmethod
    def disabled(cls):
        return cls(p_rotate=0, p_zoom=0, p_flip=0, p_noise=0, p_smooth=0,
                   p_scale=0, p_contrast=0)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    lr0: float = 0.01
    poly_exponent: float = 0.9
    momentum: float = 0.99       # Nesterov
    grad_accum: int = 4
    seed: int = 0
    folds: int = 5
    jitter_vox: int = 2          # in-plane click jitter during training
    jitter: bool = True
    augment: AugmentParams = field(default_factory=AugmentParams)
    ds_weights: tuple | None = None  # default: 2^-l over supervised stages

    def __post_init__(self):
        if self.epochs < 1 or self.grad_accum < 1 or self.folds < 1:
            raise ValueError("epochs, grad_accum, and folds must be >= 1")


def lr_poly(epoch: int, cfg: TrainConfig) -> float:
    return cfg.lr0 * (1.0 - epoch / cfg.epochs) ** cfg.poly_exponent


def ds_weights_for(n_levels: int, cfg: TrainConfig):
    if cfg.ds_weights is not None:
        w = np.asarray(cfg.ds_weights, dtype=np.float64)
        if w.size != n_levels:
            raise ValueError("ds_weights length mismatch")
    else:
        w = 2.0 ** -np.arange(n_levels, dtype=np.float64)
    return tuple(w / w.sum())


def downsample_target(target, factors):
    """Nearest-neighbor pyramid target: stride-slice at the top corner of
    each pooled block."""
    fx, fy, fz = factors
    return target[::fx, ::fy, ::fz]


def loss_dice_ce(logits_list, target, spec, ds_weights):
    """Weighted Dice+CE over the supervised pyramid.

    target is the full-resolution binary mask; per-level targets are
    nearest-downsampled by the cumulative stride factors.
    """
    strides = np.asarray(spec.strides)
    terms = []
    parts = {"dice": 0.0, "ce": 0.0}
    # cumulative stride factors per stage (stage 0 has factor 1)
    factors = np.ones(3, dtype=np.int64)
    cum = []
    for s in range(spec.levels):
        factors = factors * strides[s]
        cum.append(tuple(int(f) for f in factors))
    for logits, stage, w in zip(logits_list, spec.supervised_stages, ds_weights):
        t = downsample_target(target, cum[stage]).astype(logits.dtype)
        onehot = np.stack([1.0 - t, t]).astype(logits.dtype)
        dice = ops.soft_dice_loss(logits, t)
        ce = ops.softmax_ce_loss(logits, onehot)
        parts["dice"] += w * dice.item()
        parts["ce"] += w * ce.item()
        terms.append(ops.scale(ops.add_scalars([dice, ce]), w))
    total = ops.add_scalars(terms)
    return total, parts


def _rotation_matrix(axis, theta):
    c, s = math.cos(theta), math.sin(theta)
    m = np.eye(3)
    a, b = [i for i in range(3) if i != axis]
    m[a, a] = c
    m[a, b] = -s
    m[b, a] = s
    m[b, b] = c
    return m


def augment_sample(channels, target, rng, params: AugmentParams, spacing):
    """Spatial transforms hit every channel and the target identically
    (trilinear vs nearest); intensity transforms hit channel 0 only."""
    channels = np.asarray(channels)
    target = np.asarray(target)
    dims = channels.shape[1:]
    spacing = np.asarray(spacing, dtype=np.float64)
    rotate = rng.random() < params.p_rotate
    zoom = rng.random() < params.p_zoom
    if rotate or zoom:
        out_axis = int(np.argmax(spacing))
        theta = math.radians(rng.uniform(-params.max_rotate_deg,
                                         params.max_rotate_deg)) if rotate else 0.0
        zf = rng.uniform(*params.zoom_range) if zoom else 1.0
        s = np.diag(spacing)
        sinv = np.diag(1.0 / spacing)
        rot = _rotation_matrix(out_axis, -theta)
        mat = sinv @ rot @ s / zf
        center = (np.asarray(dims, dtype=np.float64) - 1.0) / 2.0
        offset = center - mat @ center
        new_ch = np.stack([accel.affine_sample(c, mat, offset, dims, order=1)
                           for c in channels])
        target = accel.affine_sample(target.astype(channels.dtype), mat, offset,
                                     dims, order=0)
        target = (target >= 0.5).astype(np.uint8)
        channels = new_ch
    flips = [a for a in range(3) if rng.random() < params.p_flip]
    if flips:
        axes = tuple(a + 1 for a in flips)
        channels = np.flip(channels, axis=axes).copy()
        target = np.flip(target, axis=tuple(flips)).copy()
    img = channels[0]
    if rng.random() < params.p_noise:
        img = img + rng.normal(0.0, rng.uniform(0, params.noise_sigma_max),
                               size=img.shape).astype(img.dtype)
    if rng.random() < params.p_smooth:
        img = ndimage.gaussian_filter(img, sigma=rng.uniform(*params.smooth_sigma)
                                      ).astype(img.dtype)
    if rng.random() < params.p_scale:
        img = img * img.dtype.type(rng.uniform(*params.scale_range))
    if rng.random() < params.p_contrast:
        mean = img.mean()
        img = mean + (img - mean) * img.dtype.type(
            rng.uniform(*params.contrast_range))
    channels = np.concatenate([img[None], channels[1:]], axis=0)
    return np.ascontiguousarray(channels), np.ascontiguousarray(target)


def nesterov_step(params, velocities, lr, mu):
    """v <- mu*v + g; w <- w - lr*(g + mu*v); grads must be populated."""
    for p, v in zip(params, velocities):
        if p.grad is None:
            continue
        g = p.grad
        v *= mu
        v += g
        p.data = p.data - lr * (g + mu * v)


@dataclass
class TrainingCase:
    image: np.ndarray            # normalized ROI intensities (X, Y, Z) f32
    target: np.ndarray           # ROI labels u8
    seeds: np.ndarray | None     # canonical click seeds, ROI voxel coords
    spacing: tuple
    case_id: str = ""


def training_case_from_preprocessed(case: PreprocessedCase,
                                    case_id: str = "") -> TrainingCase:
    if case.target_roi is None:
        raise ValueError("training requires the reference mask")
    return TrainingCase(image=np.asarray(case.image_roi.values, dtype=np.float32),
                        target=case.target_roi,
                        seeds=case.seeds_roi,
                        spacing=case.image_roi.geometry.spacing,
                        case_id=case_id)


def _inplane_axes(spacing):
    order = np.argsort(spacing)
    return int(order[0]), int(order[1])


def jitter_seeds(seeds, target, spacing, rng, jitter_vox):
    """+-jitter_vox in-plane shift per seed, resampled until inside the mask
    (20 tries, then the canonical seed is kept)."""
    a0, a1 = _inplane_axes(spacing)
    dims = target.shape
    out = seeds.copy()
    for i in range(seeds.shape[0]):
        for _ in range(20):
            cand = seeds[i].copy()
            cand[a0] += rng.integers(-jitter_vox, jitter_vox + 1)
            cand[a1] += rng.integers(-jitter_vox, jitter_vox + 1)
            if np.all(cand >= 0) and np.all(cand < dims) \
                    and target[tuple(cand)] > 0:
                out[i] = cand
                break
    return out


def build_channels(case: TrainingCase, plan: PipelinePlan, seeds):
    if plan.mode == "automatic":
        return case.image[None]
    egd = egd_map(case.image, case.spacing, seeds,
                  lam=plan.egd["lam"], nu=plan.egd["nu"])
    return np.stack([case.image, egd.values.astype(np.float32)])


def fold_split(n_cases: int, fold_id: int, cfg: TrainConfig):
    """Deterministic round-robin split of a seeded permutation."""
    if not 0 <= fold_id < cfg.folds:
        raise ValueError(f"fold_id {fold_id} outside 0..{cfg.folds - 1}")
    perm = np.random.default_rng(cfg.seed).permutation(n_cases)
    val = sorted(int(i) for i in perm[fold_id::cfg.folds])
    train = sorted(int(i) for i in perm if int(i) not in set(val))
    return train, val


@dataclass
class UNetModel:
    spec: object
    state: dict        # name -> ndarray, construction order
    seed: int
    epochs: int
    trace: list = field(default_factory=list)

    def build(self) -> UNet3D:
        net = UNet3D(self.spec, seed=0)
        net.load_state_arrays(self.state)
        return net


def train_fold(cases, fold_id: int, plan: PipelinePlan,
               cfg: TrainConfig) -> UNetModel:
    """Train one cross-validation fold; deterministic for a fixed config."""
    if len(cases) < 2:
        raise ValueError("need at least 2 cases to split folds")
    train_idx, _ = fold_split(len(cases), fold_id, cfg)
    if not train_idx:
        raise ValueError("fold has no training cases")
    spec = spec_from_plan(plan)
    net = UNet3D(spec, seed=int(np.random.default_rng(
        [cfg.seed, fold_id, 0]).integers(2 ** 31)))
    rng = np.random.default_rng([cfg.seed, fold_id, 1])
    params = net.parameters()
    velocities = [np.zeros_like(p.data) for p in params]
    ds = ds_weights_for(len(spec.supervised_stages), cfg)
    trace = []
    for epoch in range(cfg.epochs):
        lr = lr_poly(epoch, cfg)
        order = rng.permutation(len(train_idx))
        epoch_stats = {"loss": 0.0, "dice": 0.0, "ce": 0.0}
        pending = 0
        for step, oi in enumerate(order):
            case = cases[train_idx[oi]]
            seeds = case.seeds
            if plan.mode == "interactive" and cfg.jitter and cfg.jitter_vox > 0:
                seeds = jitter_seeds(seeds, case.target, case.spacing, rng,
                                     cfg.jitter_vox)
            channels = build_channels(case, plan, seeds)
            channels, target = augment_sample(channels, case.target, rng,
                                              cfg.augment, case.spacing)
            logits = net.forward(channels)
            total, parts = loss_dice_ce(logits, target, spec, ds)
            if not np.isfinite(total.item()):
                raise TrainingDiverged(
                    f"loss diverged at epoch {epoch}, case "
                    f"{case.case_id or train_idx[oi]}: {total.item()}")
            total.backward()
            pending += 1
            epoch_stats["loss"] += total.item()
            epoch_stats["dice"] += parts["dice"]
            epoch_stats["ce"] += parts["ce"]
            if pending == cfg.grad_accum or step == len(order) - 1:
                for p in params:
                    if p.grad is not None:
                        p.grad /= pending
                nesterov_step(params, velocities, lr, cfg.momentum)
                net.zero_grad()
                pending = 0
        n = len(order)
        trace.append({k: v / n for k, v in epoch_stats.items()})
    return UNetModel(spec=spec, state=net.state_arrays(), seed=cfg.seed,
                     epochs=cfg.epochs, trace=trace)

"""Ensemble + flip test-time-augmentation prediction, empirical
post-processing selection/application, and restoration to the original grid.

Deployment order: TTA-ensemble softmax mean on the ROI grid -> argmax (ties
to background) -> restore to the original grid -> selected post-processing.
Post-processing selection happens on cross-validation pairs in that same
original space.
"""

import itertools

import numpy as np
from scipy import ndimage

from .evalstats import dsc
from .nn.ops import softmax
from .nn.train import UNetModel
from .planner import POSTPROC_CHOICES, PipelinePlan
from .preprocess import (InverseMap, PreprocessedCase, embed_roi_mask,
                         nearest_resample_to)
from .volume import Mask3D

_STRUCT_26 = np.ones((3, 3, 3), dtype=bool)


class InferenceError(ValueError):
    pass


def case_channels(case: PreprocessedCase) -> np.ndarray:
    img = np.asarray(case.image_roi.values, dtype=np.float32)
    if case.egd_roi is None:
        return img[None]
    return np.stack([img, case.egd_roi.values.astype(np.float32)])


def predict_probs(case: PreprocessedCase, models) -> np.ndarray:
    """Mean softmax over every model and all 8 axis-flip combinations."""
    channels = case_channels(case)
    nets = [m.build() if isinstance(m, UNetModel) else m for m in models]
    if not nets:
        raise InferenceError("empty ensemble")
    acc = None
    for net in nets:
        if net.spec.in_channels != channels.shape[0]:
            raise InferenceError(
                f"model expects {net.spec.in_channels} channels, "
                f"case has {channels.shape[0]}")
        for flips in itertools.product((False, True), repeat=3):
            axes = tuple(a + 1 for a, f in enumerate(flips) if f)
            x = np.flip(channels, axis=axes) if axes else channels
            logits = net.forward(np.ascontiguousarray(x))[0]
            p = softmax(logits.data)
            if axes:
                p = np.flip(p, axis=axes)
            acc = p.astype(np.float64) if acc is None else acc + p
    return acc / (len(nets) * 8)


def predict_roi_mask(case: PreprocessedCase, models) -> Mask3D:
    """Binary ROI-grid mask; the p=0.5 tie goes to background."""
    probs = predict_probs(case, models)
    labels = (probs[1] > 0.5).astype(np.uint8)
    return Mask3D(geometry=case.image_roi.geometry, labels=labels)


def apply_postproc(mask: Mask3D, choice: str) -> Mask3D:
    """largest_component keeps the biggest 26-connected blob (ties: lowest
    scan-order first voxel); fill_holes flips 6-connected background pockets
    not touching the array border; both = fill_holes after largest_component."""
    if choice not in POSTPROC_CHOICES:
        raise InferenceError(f"unknown post-processing choice {choice!r}")
    labels = np.asarray(mask.labels, dtype=bool)
    if choice == "none" or not labels.any():
        return mask
    if choice in ("largest_component", "both"):
        comp, n = ndimage.label(labels, structure=_STRUCT_26)
        if n > 1:
            counts = np.bincount(comp.ravel(order="F"))[1:]
            best = counts.max()
            candidates = np.flatnonzero(counts == best) + 1
            if candidates.size == 1:
                keep = candidates[0]
            else:
                flat = comp.ravel(order="F")
                keep = min(candidates,
                           key=lambda lab: int(np.argmax(flat == lab)))
            labels = comp == keep
    if choice in ("fill_holes", "both"):
        labels = ndimage.binary_fill_holes(labels)
    return Mask3D(geometry=mask.geometry, labels=labels.astype(np.uint8))


def select_postprocessing(cv_pairs) -> str:
    """Mean-DSC argmax over the four choices; ties break toward the simpler
    choice in the order none < fill_holes < largest_component < both."""
    if not cv_pairs:
        raise InferenceError("post-processing selection needs at least one pair")
    order = ("none", "fill_holes", "largest_component", "both")
    best_choice, best_score = None, -1.0
    for choice in order:
        score = float(np.mean([dsc(apply_postproc(pred, choice), ref)
                               for pred, ref in cv_pairs]))
        if score > best_score + 1e-12:
            best_choice, best_score = choice, score
    return best_choice


def restore_to_original(mask_roi: Mask3D, inv: InverseMap) -> Mask3D:
    """Remove pads, embed into the resampled grid, nearest-resample back to
    the original geometry."""
    if tuple(mask_roi.geometry.dims) != tuple(inv.roi.padded_size):
        raise InferenceError("mask does not match the inverse map's ROI")
    full = embed_roi_mask(mask_roi.labels, inv)
    restored = nearest_resample_to(full, inv.resampled, inv.original)
    return Mask3D(geometry=inv.original, labels=restored.astype(np.uint8))


def predict_case(case: PreprocessedCase, models, plan: PipelinePlan,
                 postproc: str | None = None) -> Mask3D:
    """Full deployment path: TTA ensemble -> restore -> post-process."""
    roi_mask = predict_roi_mask(case, models)
    restored = restore_to_original(roi_mask, case.inverse_map)
    return apply_postproc(restored, plan.postproc if postproc is None
                          else postproc)

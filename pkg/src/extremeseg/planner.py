"""Dataset fingerprinting and rule-based derivation of the pipeline plan.

The plan pins everything the rest of the pipeline consumes: target spacing
(median per axis, 10th percentile on the low-resolution axis when the
spacing ratio exceeds 3), normalization scheme and stats, the network
topology (kernel and stride schedules, hence the ROI divisors), EGD
parameters, and the empirically selected post-processing step.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .volume import Mask3D, Volume3D

BASE_FEATURES = 4
MAX_LEVELS = 5            # resolution stages, stem included
MIN_LEVELS = 3
ANISO_RATIO = 3.0         # strictly above: anisotropic resampling rules
PSEUDO3D_RATIO = 2.0      # strictly above: 3x3x1 kernels on the first two stages
STRIDE_MIN_EXTENT = 8
CT_CLIP_PERCENTILES = (0.5, 99.5)
FOREGROUND_SAMPLE_CAP = 100_000
POSTPROC_CHOICES = ("none", "fill_holes", "largest_component", "both")


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetFingerprint:
    spacings: np.ndarray       # (n_cases, 3) mm
    dims: np.ndarray           # (n_cases, 3) voxels
    foreground_sample: np.ndarray
    modality: str

    def __post_init__(self):
        if self.spacings.ndim != 2 or self.spacings.shape[0] < 1:
            raise PlanError("fingerprint needs at least one case")
        if self.modality == "CT" and self.foreground_sample.size == 0:
            raise PlanError("CT fingerprint requires foreground intensities")


@dataclass(frozen=True)
class PipelinePlan:
    target_spacing: tuple
    anisotropic: bool
    modality: str
    normalization: dict        # {"scheme": "ct", ...stats} or {"scheme": "zscore"}
    kernel_schedule: tuple     # per-stage 3D kernel shapes
    stride_schedule: tuple     # per-stage strides; stage 0 is (1,1,1)
    divisors: tuple            # per-axis product of stride_schedule
    base_features: int = BASE_FEATURES
    egd: dict = field(default_factory=lambda: {"lam": 1.0, "nu": 1.0,
                                               "connectivity": 6})
    postproc: str = "none"     # filled in after cross-validation
    mode: str = "interactive"  # "interactive" | "automatic"
    auto_budget_voxels: int = 64 ** 3

    def __post_init__(self):
        levels = len(self.kernel_schedule)
        if not MIN_LEVELS <= levels <= MAX_LEVELS:
            raise PlanError(f"levels must be in [{MIN_LEVELS}, {MAX_LEVELS}]")
        if len(self.stride_schedule) != levels:
            raise PlanError("kernel and stride schedules must align")
        if self.stride_schedule[0] != (1, 1, 1):
            raise PlanError("stage 0 stride must be (1,1,1)")
        for k in self.kernel_schedule:
            if any(v not in (1, 3) for v in k):
                raise PlanError(f"kernel entries must be 1 or 3, got {k}")
        for s in self.stride_schedule:
            if any(v not in (1, 2) for v in s):
                raise PlanError(f"stride entries must be 1 or 2, got {s}")
        expect = tuple(int(np.prod([s[a] for s in self.stride_schedule]))
                       for a in range(3))
        if tuple(self.divisors) != expect:
            raise PlanError(f"divisors {self.divisors} != stride products {expect}")
        if self.base_features != BASE_FEATURES:
            raise PlanError(f"base_features is fixed at {BASE_FEATURES}")
        if self.postproc not in POSTPROC_CHOICES:
            raise PlanError(f"unknown postproc {self.postproc!r}")
        if self.mode not in ("interactive", "automatic"):
            raise PlanError(f"unknown mode {self.mode!r}")

    @property
    def levels(self) -> int:
        return len(self.kernel_schedule)

    @property
    def in_channels(self) -> int:
        return 1 if self.mode == "automatic" else 2

    def with_postproc(self, choice: str) -> "PipelinePlan":
        return replace(self, postproc=choice)

    def to_json(self) -> str:
        doc = {
            "format": "extremeseg-plan",
            "version": 1,
            "target_spacing": list(self.target_spacing),
            "anisotropic": self.anisotropic,
            "modality": self.modality,
            "normalization": self.normalization,
            "kernel_schedule": [list(k) for k in self.kernel_schedule],
            "stride_schedule": [list(s) for s in self.stride_schedule],
            "divisors": list(self.divisors),
            "base_features": self.base_features,
            "egd": self.egd,
            "postproc": self.postproc,
            "mode": self.mode,
            "auto_budget_voxels": self.auto_budget_voxels,
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PipelinePlan":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise PlanError(f"plan is not valid JSON: {e}") from e
        if doc.get("format") != "extremeseg-plan":
            raise PlanError("not an extremeseg plan document")
        return cls(
            target_spacing=tuple(doc["target_spacing"]),
            anisotropic=bool(doc["anisotropic"]),
            modality=doc["modality"],
            normalization=doc["normalization"],
            kernel_schedule=tuple(tuple(k) for k in doc["kernel_schedule"]),
            stride_schedule=tuple(tuple(s) for s in doc["stride_schedule"]),
            divisors=tuple(doc["divisors"]),
            base_features=int(doc["base_features"]),
            egd=doc["egd"],
            postproc=doc["postproc"],
            mode=doc.get("mode", "interactive"),
            auto_budget_voxels=int(doc.get("auto_budget_voxels", 64 ** 3)),
        )


def fingerprint_dataset(cases) -> DatasetFingerprint:
    """Collect spacings, dims, and a capped pooled foreground sample."""
    if not cases:
        raise PlanError("cannot fingerprint an empty dataset")
    spacings = []
    dims = []
    fg = []
    modality = cases[0][0].modality
    for vol, mask in cases:
        if not isinstance(vol, Volume3D) or not isinstance(mask, Mask3D):
            raise PlanError("cases must be (Volume3D, Mask3D) pairs")
        if vol.modality != modality:
            raise PlanError("mixed modalities in one dataset")
        if modality == "CT" and mask.is_empty():
            raise PlanError("CT case with an empty reference mask")
        spacings.append(vol.geometry.spacing)
        dims.append(vol.geometry.dims)
        fg.append(vol.values[mask.labels > 0])
    sample = np.concatenate(fg) if fg else np.empty(0, dtype=np.float32)
    if sample.size > FOREGROUND_SAMPLE_CAP:
        pick = np.linspace(0, sample.size - 1, FOREGROUND_SAMPLE_CAP).astype(np.int64)
        sample = sample[pick]
    return DatasetFingerprint(
        spacings=np.asarray(spacings, dtype=np.float64),
        dims=np.asarray(dims, dtype=np.int64),
        foreground_sample=np.asarray(sample, dtype=np.float64),
        modality=modality,
    )


def _target_spacing(fp: DatasetFingerprint):
    target = np.median(fp.spacings, axis=0)
    anisotropic = target.max() / target.min() > ANISO_RATIO
    if anisotropic:
        low_axis = int(np.argmax(target))
        target[low_axis] = np.percentile(fp.spacings[:, low_axis], 10,
                                         method="linear")
    return target, anisotropic


def _median_resampled_dims(fp: DatasetFingerprint, target):
    per_case = np.rint(fp.dims * fp.spacings / target[None, :])
    return np.maximum(np.median(per_case, axis=0), 1.0)


def _schedules(target, med_dims):
    """Stride/kernel schedule simulation over virtual extents and spacings."""
    spacing = target.astype(np.float64).copy()
    extent = med_dims.astype(np.float64).copy()
    strides = [(1, 1, 1)]
    while len(strides) < MAX_LEVELS:
        step = []
        for a in range(3):
            ok = (extent[a] >= STRIDE_MIN_EXTENT
                  and spacing[a] <= 2.0 * spacing.min())
            step.append(2 if ok else 1)
        if all(s == 1 for s in step):
            if len(strides) >= MIN_LEVELS:
                break
            # enforce the minimum depth on tiny inputs: relax the extent bound
            step = [2 if (extent[a] >= 2 and spacing[a] <= 2.0 * spacing.min())
                    else 1 for a in range(3)]
            if all(s == 1 for s in step):
                step = [2 if extent[a] >= 2 else 1 for a in range(3)]
            if all(s == 1 for s in step):
                raise PlanError("images too small to build a 3-level network")
        strides.append(tuple(step))
        for a in range(3):
            if step[a] == 2:
                extent[a] = np.ceil(extent[a] / 2.0)
                spacing[a] *= 2.0
    pseudo = target.max() / target.min() > PSEUDO3D_RATIO
    low_axis = int(np.argmax(target))
    kernels = []
    for stage in range(len(strides)):
        k = [3, 3, 3]
        if pseudo and stage < 2:
            k[low_axis] = 1
        kernels.append(tuple(k))
    return tuple(kernels), tuple(strides)


def derive_plan(fp: DatasetFingerprint, egd_params=None, mode="interactive",
                auto_budget_voxels=64 ** 3) -> PipelinePlan:
    """Apply the rule set to a fingerprint; deterministic per fingerprint."""
    target, anisotropic = _target_spacing(fp)
    med_dims = _median_resampled_dims(fp, target)
    kernels, strides = _schedules(target, med_dims)
    divisors = tuple(int(np.prod([s[a] for s in strides])) for a in range(3))
    if fp.modality == "CT":
        lo, hi = np.percentile(fp.foreground_sample, CT_CLIP_PERCENTILES,
                               method="linear")
        normalization = {
            "scheme": "ct",
            "clip_lo": float(lo),
            "clip_hi": float(hi),
            "mean": float(fp.foreground_sample.mean()),
            "sd": float(fp.foreground_sample.std()),
        }
    else:
        normalization = {"scheme": "zscore"}
    egd = {"lam": 1.0, "nu": 1.0, "connectivity": 6}
    if egd_params:
        egd.update(egd_params)
    return PipelinePlan(
        target_spacing=tuple(float(t) for t in target),
        anisotropic=bool(anisotropic),
        modality=fp.modality,
        normalization=normalization,
        kernel_schedule=kernels,
        stride_schedule=strides,
        divisors=divisors,
        egd=egd,
        mode=mode,
        auto_budget_voxels=auto_budget_voxels,
    )

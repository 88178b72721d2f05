"""Agreement metrics and statistics for segmentation evaluation.

Covers overlap (Dice), clinical measurements (volume, transverse maximum
diameter), method-comparison statistics (Bland-Altman absolute + percent,
Pearson r, paired two-sided t-test), and the per-case report container with
the timing breakdown and quality-score vocabulary used by the service.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .volume import Mask3D

QUALITY_SCORES = ("Excellent", "Sufficient", "Insufficient", "Incorrect",
                  "CannotLocate")
TIMING_STAGES = ("annotation", "preprocessing", "model_inference",
                 "postprocessing", "evaluation")


def dsc(a: Mask3D, b: Mask3D) -> float:
    """Dice similarity 2|A.B| / (|A|+|B|); two empty masks agree perfectly."""
    if a.geometry != b.geometry:
        raise ValueError("masks live on different grids")
    na = int(a.labels.sum())
    nb = int(b.labels.sum())
    if na == 0 and nb == 0:
        return 1.0
    inter = int((a.labels & b.labels).sum())
    return 2.0 * inter / (na + nb)


def volume_mm3(m: Mask3D) -> float:
    return float(m.labels.sum()) * float(np.prod(m.geometry.spacing))


def max_diameter_transverse(m: Mask3D) -> float:
    """Largest in-plane distance (mm) between boundary voxel centers,
    maximized over z-slices. In-plane mm coordinates are index * spacing."""
    if m.is_empty():
        raise ValueError("diameter of an empty mask is undefined")
    sx, sy = m.geometry.spacing[0], m.geometry.spacing[1]
    best = 0.0
    for z in range(m.geometry.dims[2]):
        sl = m.labels[:, :, z].astype(bool)
        if not sl.any():
            continue
        interior = np.zeros_like(sl)
        interior[1:-1, 1:-1] = (sl[1:-1, 1:-1] & sl[:-2, 1:-1] & sl[2:, 1:-1]
                                & sl[1:-1, :-2] & sl[1:-1, 2:])
        xs, ys = np.nonzero(sl & ~interior)
        pts = np.stack([xs * sx, ys * sy], axis=1)
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
        best = max(best, math.sqrt(float(d2.max())))
    return best


def bland_altman(xs, ys):
    """Agreement of paired measurements; absolute and percent variants.

    diffs = xs - ys; limits are mean +- 1.96 * sample sd (n-1 denominator);
    the percent variant scales each diff by the pair mean.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be equal-length vectors")
    if xs.size < 2:
        raise ValueError("need at least 2 pairs")

    def _stats(diffs):
        mean = float(diffs.mean())
        sd = float(diffs.std(ddof=1))
        return {"mean_diff": mean, "sd_diff": sd,
                "loa_lo": mean - 1.96 * sd, "loa_hi": mean + 1.96 * sd}

    out = {"absolute": _stats(xs - ys)}
    pair_mean = (xs + ys) / 2.0
    if np.any(pair_mean == 0):
        out["percent"] = None  # percent difference undefined at zero means
    else:
        out["percent"] = _stats(100.0 * (xs - ys) / pair_mean)
    return out


def pearson_r(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise ValueError("need two equal-length vectors with n >= 2")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    den = math.sqrt(float((dx * dx).sum()) * float((dy * dy).sum()))
    if den == 0:
        raise ValueError("zero variance; correlation undefined")
    return float((dx * dy).sum()) / den


def _betacf(a, b, x, tol=1e-10, max_iter=500):
    """Continued fraction for the regularized incomplete beta (NR style)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), abs tol 1e-10."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log(1.0 - x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided p-value for Student's t via the incomplete beta."""
    if df < 1:
        raise ValueError("df must be >= 1")
    x = df / (df + t * t)
    return reg_inc_beta(df / 2.0, 0.5, x)


def paired_t_test(xs, ys):
    """Paired two-sided t-test; returns {t, df, p_two_sided}."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise ValueError("need paired vectors with n >= 2")
    d = xs - ys
    sd = float(d.std(ddof=1))
    if sd == 0:
        raise ValueError("zero-variance differences; t-test undefined")
    n = d.size
    t = float(d.mean()) / (sd / math.sqrt(n))
    df = n - 1
    return {"t": t, "df": df, "p_two_sided": student_t_sf_two_sided(t, df)}


@dataclass
class CaseMetrics:
    case_id: str
    dsc: float
    volume_pred: float
    volume_ref: float
    diameter_pred: float
    diameter_ref: float


def case_metrics(case_id: str, pred: Mask3D, ref: Mask3D) -> CaseMetrics:
    return CaseMetrics(
        case_id=case_id,
        dsc=dsc(pred, ref),
        volume_pred=volume_mm3(pred),
        volume_ref=volume_mm3(ref),
        diameter_pred=max_diameter_transverse(pred) if not pred.is_empty() else 0.0,
        diameter_ref=max_diameter_transverse(ref) if not ref.is_empty() else 0.0,
    )


def build_report(cases, timings=None, quality_scores=None):
    """Aggregate per-case metrics into the evaluation report dict."""
    if not cases:
        raise ValueError("no cases to report")
    dscs = np.array([c.dsc for c in cases])
    report = {
        "cases": [vars(c) for c in cases],
        "aggregates": {
            "n": len(cases),
            "dsc_mean": float(dscs.mean()),
            "dsc_sd": float(dscs.std(ddof=1)) if len(cases) > 1 else 0.0,
        },
    }
    if len(cases) >= 2:
        vol_p = [c.volume_pred for c in cases]
        vol_r = [c.volume_ref for c in cases]
        dia_p = [c.diameter_pred for c in cases]
        dia_r = [c.diameter_ref for c in cases]
        agg = report["aggregates"]
        agg["volume_bland_altman"] = bland_altman(vol_p, vol_r)
        agg["diameter_bland_altman"] = bland_altman(dia_p, dia_r)
        for key, (p, r) in {"volume": (vol_p, vol_r),
                            "diameter": (dia_p, dia_r)}.items():
            try:
                agg[f"{key}_pearson_r"] = pearson_r(p, r)
            except ValueError:
                pass
            try:
                agg[f"{key}_paired_t"] = paired_t_test(p, r)
            except ValueError:
                pass  # zero-variance differences: test undefined
    if timings:
        report["timings"] = {k: timings.get(k) for k in TIMING_STAGES}
    if quality_scores:
        for s in quality_scores.values():
            if s not in QUALITY_SCORES:
                raise ValueError(f"unknown quality score {s!r}")
        report["quality_scores"] = quality_scores
    return report


def write_report_csv(path, cases):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(vars(cases[0]).keys()))
        writer.writeheader()
        for c in cases:
            writer.writerow(vars(c))

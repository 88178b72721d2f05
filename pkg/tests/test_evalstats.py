import math

import numpy as np
import pytest

from extremeseg.evalstats import (bland_altman, build_report, case_metrics,
                                  dsc, max_diameter_transverse, paired_t_test,
                                  pearson_r, reg_inc_beta,
                                  student_t_sf_two_sided, volume_mm3)
from extremeseg.geometry import Geometry
from extremeseg.volume import Mask3D

from conftest import sphere_mask


def mask_from(labels, spacing=(1, 1, 1)):
    labels = np.asarray(labels, dtype=np.uint8)
    return Mask3D(geometry=Geometry(dims=labels.shape, spacing=spacing),
                  labels=labels)


# --- DSC ---

def test_dsc_identical():
    m = sphere_mask((10, 10, 10), (5, 5, 5), 3)
    assert dsc(m, m) == 1.0


def test_dsc_disjoint():
    a = np.zeros((4, 4, 4)); a[0, 0, 0] = 1
    b = np.zeros((4, 4, 4)); b[3, 3, 3] = 1
    assert dsc(mask_from(a), mask_from(b)) == 0.0


def test_dsc_half_overlap():
    a = np.zeros((4, 4, 4)); a.ravel()[:8] = 1
    b = np.zeros((4, 4, 4)); b.ravel()[4:12] = 1
    assert dsc(mask_from(a), mask_from(b)) == 0.5


def test_dsc_both_empty_is_one():
    z = mask_from(np.zeros((3, 3, 3)))
    assert dsc(z, z) == 1.0


def test_dsc_geometry_mismatch():
    a = mask_from(np.zeros((3, 3, 3)), spacing=(1, 1, 1))
    b = mask_from(np.zeros((3, 3, 3)), spacing=(1, 1, 2))
    with pytest.raises(ValueError):
        dsc(a, b)


def test_dsc_matches_set_oracle_on_random_masks():
    rng = np.random.default_rng(0)
    for _ in range(50):
        dims = tuple(rng.integers(2, 9, size=3))
        a = (rng.random(dims) < 0.4)
        b = (rng.random(dims) < 0.4)
        sa = {tuple(i) for i in np.argwhere(a)}
        sb = {tuple(i) for i in np.argwhere(b)}
        if not sa and not sb:
            oracle = 1.0
        else:
            oracle = 2 * len(sa & sb) / (len(sa) + len(sb))
        got = dsc(mask_from(a), mask_from(b))
        assert got == oracle
        assert got == dsc(mask_from(b), mask_from(a))


# --- volume ---

def test_volume_empty():
    assert volume_mm3(mask_from(np.zeros((3, 3, 3)))) == 0.0


def test_volume_spacing_product():
    m = np.zeros((5, 5, 5)); m.ravel()[:10] = 1
    assert volume_mm3(mask_from(m, spacing=(1, 1, 3))) == 30.0


def test_volume_digitized_sphere():
    m = sphere_mask((25, 25, 25), (12, 12, 12), 10.0)
    analytic = 4.0 / 3.0 * math.pi * 10.0 ** 3
    assert abs(volume_mm3(m) - analytic) / analytic < 0.05


def test_volume_matches_count_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        dims = tuple(rng.integers(2, 9, size=3))
        lab = (rng.random(dims) < 0.5)
        sp = tuple(rng.uniform(0.5, 3.0, size=3))
        oracle = len(np.argwhere(lab)) * sp[0] * sp[1] * sp[2]
        assert np.isclose(volume_mm3(mask_from(lab, spacing=sp)), oracle)


# --- transverse diameter ---

def test_diameter_single_voxel():
    m = np.zeros((5, 5, 5)); m[2, 2, 2] = 1
    assert max_diameter_transverse(mask_from(m)) == 0.0


def test_diameter_two_voxels():
    m = np.zeros((5, 5, 5)); m[1, 2, 2] = 1; m[4, 2, 2] = 1
    assert max_diameter_transverse(mask_from(m)) == 3.0


def test_diameter_digitized_sphere():
    m = sphere_mask((25, 25, 25), (12, 12, 12), 10.0)
    assert abs(max_diameter_transverse(m) - 20.0) <= math.sqrt(2.0)


def test_diameter_matches_allpairs_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        dims = tuple(rng.integers(2, 8, size=3))
        lab = (rng.random(dims) < 0.4)
        if not lab.any():
            lab[0, 0, 0] = True
        sp = tuple(rng.uniform(0.5, 2.0, size=3))
        best = 0.0
        for z in range(dims[2]):
            pts = np.argwhere(lab[:, :, z]).astype(float)
            if len(pts) == 0:
                continue
            pts *= np.asarray(sp[:2])
            d2 = ((pts[:, None] - pts[None]) ** 2).sum(-1)
            best = max(best, math.sqrt(d2.max()))
        assert np.isclose(max_diameter_transverse(mask_from(lab, spacing=sp)),
                          best)


def test_diameter_empty_mask_errors():
    with pytest.raises(ValueError):
        max_diameter_transverse(mask_from(np.zeros((3, 3, 3))))


# --- Bland-Altman ---

def test_bland_altman_identical():
    out = bland_altman([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])["absolute"]
    assert out["mean_diff"] == 0 and out["sd_diff"] == 0
    assert out["loa_lo"] == 0 and out["loa_hi"] == 0


def test_bland_altman_hand_example():
    out = bland_altman([0.0, 2.0], [1.0, 1.0])["absolute"]  # diffs -1, +1
    assert math.isclose(out["mean_diff"], 0.0)
    assert math.isclose(out["sd_diff"], math.sqrt(2.0), rel_tol=1e-12)
    assert math.isclose(out["loa_hi"], 1.96 * math.sqrt(2.0), rel_tol=1e-12)
    assert math.isclose(out["loa_hi"], 2.77186, abs_tol=5e-6)


def test_bland_altman_percent_variant():
    out = bland_altman([10.0, 12.0], [11.0, 11.0])["percent"]
    diffs = [100 * (10 - 11) / 10.5, 100 * (12 - 11) / 11.5]
    assert math.isclose(out["mean_diff"], np.mean(diffs), rel_tol=1e-9)
    assert math.isclose(diffs[0], -9.5238, abs_tol=1e-4)
    assert math.isclose(diffs[1], 8.6957, abs_tol=1e-4)


def test_bland_altman_validation():
    with pytest.raises(ValueError):
        bland_altman([1.0], [1.0])
    with pytest.raises(ValueError):
        bland_altman([1.0, 2.0], [1.0])


# --- Pearson ---

def test_pearson_perfect():
    xs = [1.0, 2.0, 3.0]
    assert math.isclose(pearson_r(xs, [2 * x for x in xs]), 1.0)
    assert math.isclose(pearson_r(xs, [-x for x in xs]), -1.0)


def test_pearson_hand_value():
    assert math.isclose(pearson_r([1, 2, 3, 4], [1, 3, 2, 4]), 0.8)


def test_pearson_zero_variance_errors():
    with pytest.raises(ValueError):
        pearson_r([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


# --- paired t ---

def test_t_symmetric_diffs():
    out = paired_t_test([1.0, -1.0], [2.0, -2.0])  # diffs -1, +1
    assert math.isclose(out["t"], 0.0)
    assert math.isclose(out["p_two_sided"], 1.0, abs_tol=1e-12)


def test_t_hand_example():
    # diffs 1..5: t = 3/(sqrt(2.5)/sqrt(5)); reference values frozen from an
    # independent statistical implementation (scipy.stats.ttest_rel)
    out = paired_t_test([1.0, 2.0, 3.0, 4.0, 5.0], [0.0] * 5)
    assert math.isclose(out["t"], 4.242640687119285, rel_tol=1e-12)
    assert out["df"] == 4
    assert math.isclose(out["p_two_sided"], 0.013235599563682695, abs_tol=1e-6)


def test_t_zero_variance_errors():
    with pytest.raises(ValueError):
        paired_t_test([1.0, 2.0], [0.0, 1.0])


def test_t_reference_table():
    # two-sided p for t at df; frozen from scipy.stats.t.sf(t, df) * 2
    table = {
        (0.5, 1): 0.7048327646991336,
        (0.5, 4): 0.6433299631818633,
        (0.5, 30): 0.6207230048851273,
        (2.0, 1): 0.2951672353008664,
        (2.0, 4): 0.1161165235168155,
        (2.0, 30): 0.0546250449629831,
        (4.0, 1): 0.15595826075473865,
        (4.0, 4): 0.01613008990009254,
        (4.0, 30): 0.0003818456360837564,
    }
    for (t, df), expected in table.items():
        assert math.isclose(student_t_sf_two_sided(t, df), expected,
                            abs_tol=1e-3)


def test_incomplete_beta_edge_cases():
    assert reg_inc_beta(2.0, 0.5, 0.0) == 0.0
    assert reg_inc_beta(2.0, 0.5, 1.0) == 1.0


# --- report ---

def test_report_shape():
    a = sphere_mask((12, 12, 12), (6, 6, 6), 4)
    b = sphere_mask((12, 12, 12), (6, 6, 6), 3.5)
    rows = [case_metrics("c0", a, b), case_metrics("c1", b, b)]
    rep = build_report(rows, timings={"annotation": 1.0},
                       quality_scores={"c0": "Sufficient"})
    assert rep["aggregates"]["n"] == 2
    assert 0 <= rep["aggregates"]["dsc_mean"] <= 1
    assert set(rep["timings"]) == {"annotation", "preprocessing",
                                   "model_inference", "postprocessing",
                                   "evaluation"}
    t = rep["aggregates"]["volume_paired_t"]
    assert t["df"] == 1 and set(t) == {"t", "df", "p_two_sided"}
    assert "volume_bland_altman" in rep["aggregates"]
    with pytest.raises(ValueError):
        build_report(rows, quality_scores={"c0": "Great"})

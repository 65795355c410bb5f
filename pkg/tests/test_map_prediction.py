import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agbchange.data_ingest import GeometryError
from agbchange.features import TermSpec
from agbchange.map_prediction import (
    MAP_NODATA,
    MapStats,
    predict_map,
    predict_point,
    synthetic_mean_for_estimator,
)
from agbchange.subset_selection import ModelFit
from conftest import make_stack

NDI_T1 = TermSpec("ndi", "t1", "B7", "B12")
NDI_T2 = TermSpec("ndi", "t2", "B7", "B12")
S2_BI = ModelFit("bi_temporal", [NDI_T1, NDI_T2], -79.86, [-137.32, 284.0])
LS_UNI = ModelFit(
    "uni_temporal", [TermSpec("raw", "t2", "B5"), TermSpec("raw", "t2", "B7")], -0.04, [0.0095, -0.04]
)


def test_bi_temporal_fixture():
    v = predict_point(S2_BI, {NDI_T1: 0.5, NDI_T2: 0.6})
    assert v == pytest.approx(21.88, rel=1e-9)


def test_uni_temporal_fixture_by_name():
    v = predict_point(LS_UNI, {"raw(B5)@t2": 1000, "raw(B7)@t2": 500})
    assert v == pytest.approx(-10.54, rel=1e-9)


def test_zero_terms_give_intercept():
    assert predict_point(S2_BI, {NDI_T1: 0, NDI_T2: 0}) == -79.86


def test_missing_term():
    with pytest.raises(KeyError):
        predict_point(S2_BI, {NDI_T1: 0.5})


@given(
    st.floats(-100, 100), st.lists(st.floats(-10, 10), min_size=2, max_size=2),
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-5, 5),
)
def test_linearity(b0, coefs, x1, x2, c):
    m = ModelFit("bi_temporal", [NDI_T1, NDI_T2], b0, coefs)
    mc = ModelFit("bi_temporal", [NDI_T1, NDI_T2], b0, [c * k for k in coefs])
    x = {NDI_T1: x1, NDI_T2: x2}
    expected = c * (predict_point(m, x) - b0) + b0
    assert predict_point(mc, x) == pytest.approx(expected, rel=1e-9, abs=1e-9)


def _raw_model(lo=-math.inf, hi=math.inf):
    t = TermSpec("raw", "t2", "B1")
    return ModelFit("uni_temporal", [t], 1.0, [2.0], training_ranges=[(lo, hi)])


def test_mask_counting():
    stack = make_stack({"B1": [[1, 2], [3, 4]]}, label="t2")
    mask = make_stack({"mask": [[1, 0], [1, 1]]})
    dmap, stats = predict_map(_raw_model(), [stack], mask)
    out = dmap.bands["dagb"]
    assert stats.n_forest_pixels == 3
    assert np.count_nonzero(out == MAP_NODATA) == 1
    assert out.tolist() == [[3, MAP_NODATA], [7, 9]]
    assert stats.pixel_area == pytest.approx(0.01)


def test_constant_bands():
    t1 = make_stack({"B7": np.full((3, 3), 0.5), "B12": np.full((3, 3), 0.25)}, label="t1")
    t2 = make_stack({"B7": np.full((3, 3), 0.5), "B12": np.full((3, 3), 0.2)}, label="t2")
    mask = make_stack({"mask": np.ones((3, 3))})
    dmap, stats = predict_map(S2_BI, {"t1": t1, "t2": t2}, mask)
    a = np.float32(0.5).item()
    point = predict_point(S2_BI, {
        NDI_T1: (a - np.float32(0.25).item()) / (a + np.float32(0.25).item()),
        NDI_T2: (a - np.float32(0.2).item()) / (a + np.float32(0.2).item()),
    })
    assert stats.synthetic_mean == pytest.approx(point, rel=1e-12)
    assert np.unique(dmap.bands["dagb"]).size == 1


def test_out_of_range_fraction():
    stack = make_stack({"B1": [[0.1, 0.2], [0.4, 0.5]]}, label="t2")
    mask = make_stack({"mask": np.ones((2, 2))})
    # training ranges are observed on float32 rasters, so the bounds are float32 values too
    lo, hi = float(np.float32(0.1)), float(np.float32(0.4))
    _, stats = predict_map(_raw_model(lo, hi), [stack], mask)
    assert stats.n_out_of_range == 1
    assert stats.out_of_range_fraction == 0.25


def _stats(sum_, n_forest, n_pop):
    return MapStats(n_forest, n_pop, 0, sum_, 0.09, 0.0, 0, None, None)


def test_synthetic_mean_conventions():
    s = _stats(30.0, 2, 4)
    assert synthetic_mean_for_estimator(s, "population_mean") == 7.5
    assert synthetic_mean_for_estimator(s, "forest_mean") == 15
    s = _stats(30.0, 2, 2)
    assert synthetic_mean_for_estimator(s, "population_mean") == synthetic_mean_for_estimator(s, "forest_mean")


def test_synthetic_mean_no_forest():
    s = _stats(0.0, 0, 4)
    assert synthetic_mean_for_estimator(s, "population_mean") == 0
    with pytest.raises(ValueError):
        synthetic_mean_for_estimator(s, "forest_mean")
    with pytest.raises(ValueError):
        synthetic_mean_for_estimator(s, "area")


def test_synthetic_mean_via_map():
    stack = make_stack({"B1": [[4.5, 0], [9.5, 0]]}, label="t2")
    mask = make_stack({"mask": [[1, 0], [1, 0]]})
    _, stats = predict_map(_raw_model(), [stack], mask)
    assert stats.prediction_sum == 30
    assert synthetic_mean_for_estimator(stats, "population_mean") == 7.5
    assert synthetic_mean_for_estimator(stats, "forest_mean") == 15


def test_mask_faithfulness_and_no_truncation(rng):
    b = rng.uniform(-50, 50, (6, 7))
    b[2, 3] = -9999
    m = rng.integers(0, 2, (6, 7)).astype(float)
    m[0, 0] = -9999
    m[2, 3] = 1
    stack = make_stack({"B1": b}, label="t2")
    mask = make_stack({"mask": m})
    dmap, stats = predict_map(_raw_model(), [stack], mask)
    out = dmap.bands["dagb"]
    expect_nodata = (m != 1) | (b == -9999)
    assert np.array_equal(out == MAP_NODATA, expect_nodata)
    assert stats.n_nodata_in_mask == 1
    assert stats.n_population_pixels == 6 * 7 - 1 - 1
    assert stats.prediction_min < 0 < stats.prediction_max


def test_workers_bit_identical(rng):
    t1 = make_stack({"B7": rng.uniform(0, 1, (37, 11)), "B12": rng.uniform(0, 1, (37, 11))}, label="t1")
    t2 = make_stack({"B7": rng.uniform(0, 1, (37, 11)), "B12": rng.uniform(0, 1, (37, 11))}, label="t2")
    mask = make_stack({"mask": rng.integers(0, 2, (37, 11))})
    ref_map, ref = predict_map(S2_BI, [t1, t2], mask, workers=1)
    for k in (2, 3, 4, 8):
        dmap, stats = predict_map(S2_BI, [t1, t2], mask, workers=k)
        assert stats == ref
        assert dmap.bands["dagb"].tobytes() == ref_map.bands["dagb"].tobytes()


def test_geometry_mismatch():
    stack = make_stack({"B1": np.ones((2, 2))}, label="t2")
    mask = make_stack({"mask": np.ones((2, 2))}, x0=5.0)
    with pytest.raises(GeometryError):
        predict_map(_raw_model(), [stack], mask)


def test_missing_epoch_stack():
    stack = make_stack({"B7": np.ones((2, 2)), "B12": np.ones((2, 2))}, label="t2")
    mask = make_stack({"mask": np.ones((2, 2))})
    with pytest.raises(KeyError):
        predict_map(S2_BI, [stack], mask)

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agbchange.data_ingest import parse_plot_table
from agbchange.estimation import (
    EstimateReport,
    EstimationError,
    be_total,
    confidence_interval,
    estimate,
    ma_total,
    plot_responses,
    relative_efficiency,
)


def test_be_zero_sample():
    r = be_total([0.0, 0.0, 0.0], 1000)
    assert (r.total, r.variance) == (0.0, 0.0)


def test_be_constant_sample():
    r = be_total([4.5] * 7, 1000)
    assert r.total == 4500.0 and r.variance == 0.0


def test_be_hand_fixture():
    r = be_total([1, 2, 3], 100)
    assert r.total == pytest.approx(200, rel=1e-12)
    assert r.variance == pytest.approx(10000 / 3, rel=1e-12)
    assert r.se == pytest.approx(math.sqrt(10000 / 3))


def test_be_needs_two_plots():
    with pytest.raises(EstimationError):
        be_total([1.0], 100)


def test_ma_hand_fixture():
    r = ma_total([10, 2], [8, 4], [1, 1], 5, 100)
    assert r.total == pytest.approx(500, rel=1e-12)
    assert r.synthetic == 500 and r.correction == 0
    assert r.variance == pytest.approx(40000, rel=1e-12)


def test_ma_indicator_zeroes_prediction():
    # non-forest plot: y forced to 0 upstream, prediction ignored through I = 0
    r = ma_total([10, 0], [8, 50], [1, 0], 0, 100)
    assert r.correction == pytest.approx(100 / 2 * 2)


def test_ma_perfect_model():
    y = np.array([3.0, -1.0, 7.0, 2.0])
    r = ma_total(y, y, np.ones(4), 1.25, 400)
    assert r.variance == 0.0
    assert r.total == 400 * 1.25


@settings(max_examples=100)
@given(st.lists(st.floats(-500, 500, allow_nan=False), min_size=2, max_size=60), st.floats(1, 1e7))
def test_null_model_collapse_bitwise(y, area):
    y = np.array(y)
    be = be_total(y, area)
    ma = ma_total(y, np.zeros_like(y), np.ones_like(y), 0.0, area)
    assert ma.total == be.total
    assert ma.variance == be.variance


@settings(max_examples=100)
@given(
    st.lists(st.tuples(st.floats(-200, 200), st.floats(-200, 200), st.booleans()), min_size=3, max_size=40),
    st.floats(-50, 50),
    st.floats(0.1, 10),
    st.randoms(use_true_random=False),
)
def test_scale_permutation_translation(rows, syn, c, rnd):
    y = np.array([r[0] for r in rows])
    yhat = np.array([r[1] for r in rows])
    ind = np.array([float(r[2]) for r in rows])
    A = 1234.5
    be, ma = be_total(y, A), ma_total(y, yhat, ind, syn, A)

    be2, ma2 = be_total(c * y, A), ma_total(c * y, c * yhat, ind, c * syn, A)
    assert be2.total == pytest.approx(c * be.total, rel=1e-9, abs=1e-6)
    assert ma2.total == pytest.approx(c * ma.total, rel=1e-9, abs=1e-6)
    assert be2.variance == pytest.approx(c * c * be.variance, rel=1e-9, abs=1e-6)
    assert ma2.variance == pytest.approx(c * c * ma.variance, rel=1e-9, abs=1e-6)

    perm = list(range(len(y)))
    rnd.shuffle(perm)
    bp, mp = be_total(y[perm], A), ma_total(y[perm], yhat[perm], ind[perm], syn, A)
    assert (bp.total, bp.variance) == (be.total, be.variance)
    assert (mp.total, mp.variance) == (ma.total, ma.variance)

    d = 3.25
    bt = be_total(y + d, A)
    assert bt.total == pytest.approx(be.total + A * d, rel=1e-12, abs=1e-6)
    assert bt.variance == pytest.approx(be.variance, rel=1e-9, abs=1e-3)


def test_relative_efficiency():
    assert relative_efficiency(4.0, 4.0) == 1.0
    assert relative_efficiency(9, 4) == 2.25
    assert math.isinf(relative_efficiency(9, 0))


def test_confidence_intervals():
    assert confidence_interval(10, 0) == (10, 10)
    lo, hi = confidence_interval(0.12, 2.94)
    assert (round(lo, 2), round(hi, 2)) == (-5.64, 5.88)
    lo, hi = confidence_interval(2.57, 1.7)
    assert (round(lo, 2), round(hi, 2)) == (-0.76, 5.90)


def test_non_forest_plots_zeroed():
    plots = parse_plot_table(
        "plot_id,x,y,forest,agb_t1,agb_t2\na,0,0,1,100,130\nb,0,0,0,50,10\nc,0,0,1,80,60\n"
    )
    y, ind = plot_responses(plots)
    assert y.tolist() == [30, 0, -20]
    assert ind.tolist() == [1, 0, 1]
    assert be_total(plots, 30).total == pytest.approx(30 / 3 * 10)


def test_report_units_and_invariants():
    plots = parse_plot_table("plot_id,x,y,forest,agb_t1,agb_t2\na,0,0,1,0,1\nb,0,0,1,0,2\nc,0,0,1,0,3\n")
    rep = estimate(plots, [0.5, 2.5, 2.0], 1.5, 100)
    d = rep.to_dict()
    for key in ("t_be_Mt", "se_be_Mt", "t_ma_Mt", "se_ma_Mt", "re", "var_be_Mt2", "ci95_ma_Mt"):
        assert key in d
    assert d["t_be_Mt"] == pytest.approx(200e-6)
    assert d["var_be_Mt2"] == pytest.approx(10000 / 3 * 1e-12)
    assert d["se_be_Mt"] == pytest.approx(math.sqrt(d["var_be_Mt2"]))
    assert d["t_ma_Mt"] == pytest.approx(d["synthetic_component_Mt"] + d["correction_component_Mt"])
    assert d["re"] == pytest.approx(d["var_be_Mt2"] / d["var_ma_Mt2"])
    assert d["ci95_be_Mt"] == pytest.approx([d["t_be_Mt"] - 1.96 * d["se_be_Mt"], d["t_be_Mt"] + 1.96 * d["se_be_Mt"]])
    json.loads(rep.to_json())


def test_report_infinite_re_serialises():
    plots = parse_plot_table("plot_id,x,y,forest,agb_t1,agb_t2\na,0,0,1,0,1\nb,0,0,1,0,2\n")
    rep = estimate(plots, [1.0, 2.0], 1.5, 100)
    assert json.loads(rep.to_json())["re"] == "inf"

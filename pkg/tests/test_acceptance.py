"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
"""

import json
import math
import time
from itertools import combinations

import numpy as np
import pytest

from agbchange.cli import main
from agbchange.estimation import be_total, ma_total
from agbchange.features import TermSpec, enumerate_terms
from agbchange.map_prediction import predict_map, predict_point
from agbchange.simulation import SimConfig, monte_carlo
from agbchange.subset_selection import ModelFit, best_subsets_bnb, exhaustive_best_subsets
from conftest import make_stack, write_fixture_4x4

S2_BANDS = ["B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B11", "B12"]
LANDSAT_BANDS = ["B1", "B2", "B3", "B4", "B5", "B7"]


def verdict(name: str, ok: bool, detail: str) -> None:
    print(f"\n{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


def test_candidate_pool_counts():
    t0 = time.perf_counter()
    n_idx10 = sum(t.kind == "ndi" for t in enumerate_terms(S2_BANDS, "uni_temporal"))
    n_idx6 = sum(t.kind == "ndi" for t in enumerate_terms(LANDSAT_BANDS, "uni_temporal"))
    uni = len(enumerate_terms(S2_BANDS, "uni_temporal"))
    bi = len(enumerate_terms(S2_BANDS, "bi_temporal"))
    dt = time.perf_counter() - t0
    ok = (n_idx10, n_idx6, uni, bi) == (45, 15, 55, 110) and dt < 1
    verdict("candidate pool counts", ok, f"indices 10/6 bands = {n_idx10}/{n_idx6}, uni = {uni}, bi = {bi}, {dt:.3f} s")


def test_fixture_predictions():
    t0 = time.perf_counter()
    t1, t2 = TermSpec("ndi", "t1", "B7", "B12"), TermSpec("ndi", "t2", "B7", "B12")
    bi = ModelFit("bi_temporal", [t1, t2], -79.86, [-137.32, 284.0])
    uni = ModelFit("uni_temporal", [TermSpec("raw", "t2", "B5"), TermSpec("raw", "t2", "B7")], -0.04, [0.0095, -0.04])
    v_bi = predict_point(bi, {t1: 0.5, t2: 0.6})
    v_uni = predict_point(uni, {"raw(B5)@t2": 1000, "raw(B7)@t2": 500})
    dt = time.perf_counter() - t0
    ok = math.isclose(v_bi, 21.88, rel_tol=1e-9) and math.isclose(v_uni, -10.54, rel_tol=1e-9) and dt < 1
    verdict("fixture predictions", ok, f"bi = {v_bi!r}, uni = {v_uni!r}, {dt:.3f} s")


def test_oracle_equivalence():
    t0 = time.perf_counter()
    mismatches, worst = 0, 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(8, 13))
        X = rng.normal(size=(50, p))
        y = X[:, :3] @ rng.normal(size=3) + rng.normal(size=50)
        fast = best_subsets_bnb(X, y, k_max=3, m=5)
        ref = exhaustive_best_subsets(X, y, k_max=3, m=5)
        for k in ref:
            if [s.columns for s in fast[k]] != [s.columns for s in ref[k]]:
                mismatches += 1
            for a, b in zip(fast[k], ref[k]):
                worst = max(worst, abs(a.rss - b.rss) / max(abs(b.rss), 1e-300))
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and worst <= 1e-9 and dt < 60
    verdict("branch-and-bound vs exhaustive", ok, f"{mismatches} subset mismatches, max rel rss diff {worst:.1e}, {dt:.2f} s")


def test_estimator_hand_fixtures():
    t0 = time.perf_counter()
    be = be_total([1, 2, 3], 100)
    ma = ma_total([10, 2], [8, 4], [1, 1], 5, 100)
    dt = time.perf_counter() - t0
    checks = [
        math.isclose(be.total, 200, rel_tol=1e-9),
        math.isclose(be.variance, 10000 / 3, rel_tol=1e-9),
        math.isclose(ma.total, 500, rel_tol=1e-9),
        math.isclose(ma.variance, 40000, rel_tol=1e-9),
    ]
    verdict(
        "estimator hand fixtures", all(checks) and dt < 1,
        f"BE t={be.total!r} var={be.variance!r}; MA t={ma.total!r} var={ma.variance!r}",
    )


def test_null_model_collapse():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    failures = 0
    for _ in range(200):
        y = rng.normal(5, 30, int(rng.integers(2, 300)))
        area = float(rng.uniform(1, 1e7))
        be = be_total(y, area)
        ma = ma_total(y, np.zeros_like(y), np.ones_like(y), 0.0, area)
        failures += (ma.total != be.total) or (ma.variance != be.variance)
    dt = time.perf_counter() - t0
    verdict("null-model collapse (bitwise)", failures == 0 and dt < 1, f"{failures}/200 mismatches, {dt:.3f} s")


@pytest.fixture(scope="module")
def misspecified_run():
    # Linear candidate terms cannot express the quadratic change signal in the SWIR band.
    cfg = SimConfig(n_pixels=10_000, quadratic_change=1e-5)
    t0 = time.perf_counter()
    rep = monte_carlo(cfg, n=200, replicates=1000)
    return rep, time.perf_counter() - t0


@pytest.mark.slow
def test_mc_be_unbiased(misspecified_run):
    rep, _ = misspecified_run
    z = rep.bias_be / rep.mcse_be
    verdict("MC bias(t_be) <= 3 MCSE", abs(z) <= 3, f"bias {rep.bias_be:.1f} t = {z:+.2f} MCSE")


@pytest.mark.slow
def test_mc_ma_unbiased_misspecified(misspecified_run):
    rep, _ = misspecified_run
    z = rep.bias_ma / rep.mcse_ma
    verdict("MC bias(t_ma) <= 3 MCSE, misspecified", abs(z) <= 3, f"bias {rep.bias_ma:.1f} t = {z:+.2f} MCSE")


@pytest.mark.slow
def test_mc_variance_calibration(misspecified_run):
    rep, _ = misspecified_run
    c = rep.calibration_be
    verdict("MC mean(var_be)/empVar in [0.9, 1.1]", 0.9 <= c <= 1.1, f"ratio {c:.4f}")


@pytest.mark.slow
def test_mc_relative_efficiency(misspecified_run):
    rep, dt = misspecified_run
    r, re = rep.swir_delta_correlation, rep.empirical_re
    ok = abs(r) >= 0.6 and re > 1.5 and dt <= 600 and rep.n_failed == 0
    verdict("MC empirical RE > 1.5 with |corr| >= 0.6", ok,
            f"RE {re:.3f}, corr {r:+.3f}, {rep.n_failed} failed replicates, runtime {dt:.1f} s")


@pytest.mark.slow
def test_be_coverage():
    rep = monte_carlo(SimConfig(n_pixels=10_000), n=200, replicates=2000)
    cov = rep.coverage_be
    verdict("BE 95% CI coverage in [0.93, 0.97]", 0.93 <= cov <= 0.97, f"coverage {cov:.4f} over {rep.n_ok} replicates")


def test_estimate_determinism(tmp_path):
    t0 = time.perf_counter()
    paths, _ = write_fixture_4x4(tmp_path)
    outs = []
    for i, workers in enumerate((1, 1, 4, 4)):
        out = tmp_path / f"report{i}.json"
        code = main([
            "estimate", "--plots", paths["plots"], "--stack", f"t2={paths['t2']}", "--mask", paths["mask"],
            "--model", paths["model"], "--area", "1000", "--workers", str(workers), "--output", str(out),
        ])
        assert code == 0
        outs.append(out.read_bytes())
    dt = time.perf_counter() - t0
    ok = len(set(outs)) == 1 and dt < 5
    verdict("estimate JSON byte-identical (runs, 1 vs 4 workers)", ok,
            f"{len(set(outs))} distinct outputs over 4 runs, {dt:.2f} s")


def test_out_of_range_accounting():
    t0 = time.perf_counter()
    term = TermSpec("raw", "t2", "B1")
    # ranges are observed on float32 rasters, so the bounds are float32 values
    lo, hi = float(np.float32(0.1)), float(np.float32(0.4))
    model = ModelFit("uni_temporal", [term], 0.0, [1.0], training_ranges=[(lo, hi)])
    stack = make_stack({"B1": [[0.1, 0.2], [0.4, 0.5]]}, label="t2")
    mask = make_stack({"mask": np.ones((2, 2))})
    _, stats = predict_map(model, [stack], mask)
    dt = time.perf_counter() - t0
    ok = stats.out_of_range_fraction == 0.25 and dt < 1
    verdict("out-of-range fraction", ok, f"{stats.out_of_range_fraction!r} ({stats.n_out_of_range}/{stats.n_forest_pixels})")

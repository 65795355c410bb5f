"""Synthetic forest populations and Monte Carlo checks of the estimators.

Random streams
--------------
Every stream is a NumPy ``PCG64`` generator whose 64-bit seed comes from
:func:`derive_seed`: the user seed is pushed through splitmix64 once per
key (stream id, replicate index, ...), each step xor-ing the key into the
state. Replicate ``r`` of a run therefore uses ``derive_seed(seed,
STREAM_REPLICATE, r)`` regardless of how replicates are scheduled.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from .data_ingest import PlotRecord, RasterStack
from .estimation import be_total, confidence_interval, ma_total, relative_efficiency
from .features import FeatureMatrix, enumerate_terms, evaluate_terms
from .map_prediction import MAP_NODATA
from .subset_selection import select_model

MASK64 = (1 << 64) - 1
STREAM_POPULATION = 1
STREAM_SAMPLE = 2
STREAM_REPLICATE = 3


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    state = seed & MASK64
    _, out = splitmix64(state)
    for k in keys:
        _, out = splitmix64(out ^ (k & MASK64))
    return out


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))


class SimConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid simulation config: " + "; ".join(problems))
        self.fields = problems


@dataclass
class SimConfig:
    """Generative settings for a synthetic population.

    Spectra: every band at epoch ``t`` is ``base + slope * agb_t + noise``;
    the SWIR-like band (``swir_band``, default the last band) has a
    negative slope and, at t2 only, an extra
    ``change_sensitivity * delta + quadratic_change * delta**2`` term.
    A non-zero ``quadratic_change`` makes a linear model misspecified.
    """

    n_pixels: int = 10_000
    pixel_size: float = 30.0
    bands: list[str] = field(default_factory=lambda: ["B4", "B8", "B12"])
    growth_mean: float = 8.0
    growth_sd: float = 4.0
    harvest_probability: float = 0.12
    harvest_loss_fraction: float = 0.8
    initial_agb_mean: float = 100.0
    initial_agb_sd: float = 40.0
    spectral_noise_sd: float = 0.03
    forest_fraction: float = 0.7
    agb_sensitivity: float = 2e-4  # reflectance per t/ha
    change_sensitivity: float = -1e-3  # reflectance per t/ha of change, SWIR-like band at t2
    quadratic_change: float = 0.0  # reflectance per (t/ha)², SWIR-like band at t2
    swir_band: str | None = None
    seed: int = 20140519

    def validate(self) -> None:
        problems = []
        if not isinstance(self.n_pixels, int) or self.n_pixels < 1:
            problems.append("n_pixels must be an integer >= 1")
        if not self.pixel_size > 0:
            problems.append("pixel_size must be > 0")
        for name in ("harvest_probability", "harvest_loss_fraction", "forest_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                problems.append(f"{name} must be in [0, 1]")
        for name in ("growth_sd", "initial_agb_sd", "spectral_noise_sd"):
            if not getattr(self, name) >= 0:
                problems.append(f"{name} must be >= 0")
        if not self.bands or len(set(self.bands)) != len(self.bands):
            problems.append("bands must be a non-empty list of unique names")
        elif self.swir_band is not None and self.swir_band not in self.bands:
            problems.append("swir_band must be one of bands")
        if not isinstance(self.seed, int) or not 0 <= self.seed <= MASK64:
            problems.append("seed must be a 64-bit non-negative integer")
        if problems:
            raise SimConfigError(problems)

    @property
    def swir(self) -> str:
        return self.swir_band if self.swir_band is not None else self.bands[-1]

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise SimConfigError([f"unknown field {k!r}" for k in unknown])
        return cls(**d)


@dataclass
class SyntheticPopulation:
    config: SimConfig
    forest: np.ndarray  # bool, (N,)
    agb_t1: np.ndarray
    agb_t2: np.ndarray
    delta: np.ndarray  # 0 on non-forest pixels
    bands: dict[tuple[str, str], np.ndarray]  # (epoch, band) -> (N,)
    true_total: float  # t

    @property
    def n_pixels(self) -> int:
        return self.forest.shape[0]

    @property
    def pixel_area(self) -> float:
        return self.config.pixel_size**2 / 10_000.0

    @property
    def area(self) -> float:
        return self.n_pixels * self.pixel_area

    @property
    def ncols(self) -> int:
        return math.ceil(math.sqrt(self.n_pixels))

    def pixel_center(self, k: np.ndarray | int):
        row, col = np.divmod(k, self.ncols)
        ps = self.config.pixel_size
        return (col + 0.5) * ps, -(row + 0.5) * ps

    def to_rasters(self) -> tuple[dict[str, RasterStack], RasterStack]:
        """Lay the pixels out row-major on a square-ish grid with origin (0, 0).

        Padding cells beyond ``n_pixels`` are nodata in the mask and bands.
        """
        ncols = self.ncols
        nrows = math.ceil(self.n_pixels / ncols)
        pad = ncols * nrows - self.n_pixels

        def grid(v):
            return np.concatenate([np.asarray(v, dtype=float), np.full(pad, MAP_NODATA)]).reshape(nrows, ncols)

        ps = self.config.pixel_size
        stacks = {}
        for epoch in ("t1", "t2"):
            layers = {b: grid(self.bands[(epoch, b)]) for b in self.config.bands}
            stacks[epoch] = RasterStack(ncols, nrows, 0.0, 0.0, ps, MAP_NODATA, layers, epoch)
        mask = RasterStack(ncols, nrows, 0.0, 0.0, ps, MAP_NODATA, {"mask": grid(self.forest.astype(float))}, "mask")
        return stacks, mask

    def band_correlation(self, epoch: str = "t2", band: str | None = None) -> float:
        """Correlation of one band with delta over forest pixels."""
        band = band or self.config.swir
        f = self.forest
        return float(np.corrcoef(self.bands[(epoch, band)][f], self.delta[f])[0, 1])


def gen_population(config: SimConfig) -> SyntheticPopulation:
    config.validate()
    rng = make_rng(config.seed, STREAM_POPULATION)
    N = config.n_pixels
    forest = rng.random(N) < config.forest_fraction
    agb1 = np.maximum(rng.normal(config.initial_agb_mean, config.initial_agb_sd, N), 0.0)
    harvest = rng.random(N) < config.harvest_probability
    growth = rng.normal(config.growth_mean, config.growth_sd, N)
    agb2 = np.where(harvest, agb1 * (1.0 - config.harvest_loss_fraction), np.maximum(agb1 + growth, 0.0))
    agb1 = np.where(forest, agb1, 0.0)
    agb2 = np.where(forest, agb2, 0.0)
    delta = agb2 - agb1

    B = len(config.bands)
    bands = {}
    for epoch, agb in (("t1", agb1), ("t2", agb2)):
        for j, name in enumerate(config.bands):
            base = 0.05 + 0.25 * (j + 1) / B
            if name == config.swir:
                val = base - config.agb_sensitivity * agb
                if epoch == "t2":
                    val = val + config.change_sensitivity * delta + config.quadratic_change * delta**2
            else:
                val = base + config.agb_sensitivity * (j + 1) / B * agb
            bands[(epoch, name)] = val + rng.normal(0.0, config.spectral_noise_sd, N)

    true_total = math.fsum(delta[forest] * (config.pixel_size**2 / 10_000.0))
    return SyntheticPopulation(config, forest, agb1, agb2, delta, bands, true_total)


def _draw_indices(n_pixels: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if n > n_pixels:
        raise ValueError(f"sample size {n} exceeds population size {n_pixels}")
    if n < 0:
        raise ValueError("sample size must be non-negative")
    return rng.choice(n_pixels, size=n, replace=False)


def draw_srs(population: SyntheticPopulation, n: int, seed: int) -> list[PlotRecord]:
    """Simple random sample of ``n`` distinct pixels as plot records at pixel centres."""
    idx = _draw_indices(population.n_pixels, n, make_rng(seed, STREAM_SAMPLE))
    xs, ys = population.pixel_center(idx)
    return [
        PlotRecord(
            plot_id=f"px{k}",
            x=float(x),
            y=float(y),
            forest=int(population.forest[k]),
            agb_t1=float(population.agb_t1[k]),
            agb_t2=float(population.agb_t2[k]),
            delta_agb=float(population.agb_t2[k] - population.agb_t1[k]),
        )
        for k, x, y in zip(idx, xs, ys)
    ]


@dataclass
class MCReport:
    R: int
    n: int
    mode: str
    true_total: float  # t
    n_failed: int
    mean_t_be: float
    var_t_be: float  # empirical, across replicates
    mean_var_be_hat: float
    mean_t_ma: float
    var_t_ma: float
    mean_var_ma_hat: float
    coverage_be: float
    coverage_ma: float
    swir_delta_correlation: float
    failures: list[str] = field(default_factory=list)

    @property
    def n_ok(self) -> int:
        return self.R - self.n_failed

    @property
    def bias_be(self) -> float:
        return self.mean_t_be - self.true_total

    @property
    def bias_ma(self) -> float:
        return self.mean_t_ma - self.true_total

    @property
    def mcse_be(self) -> float:
        return math.sqrt(self.var_t_be / self.n_ok)

    @property
    def mcse_ma(self) -> float:
        return math.sqrt(self.var_t_ma / self.n_ok)

    @property
    def calibration_be(self) -> float:
        return self.mean_var_be_hat / self.var_t_be

    @property
    def calibration_ma(self) -> float:
        return self.mean_var_ma_hat / self.var_t_ma

    @property
    def empirical_re(self) -> float:
        return relative_efficiency(self.var_t_be, self.var_t_ma)

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("bias_be", "bias_ma", "mcse_be", "mcse_ma", "calibration_be", "calibration_ma", "empirical_re"):
            d[name] = getattr(self, name)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass
class Replicate:
    t_be: float
    var_be: float
    t_ma: float
    var_ma: float


def replicates_csv(reps: Sequence[Replicate | None]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "t_be", "var_be", "t_ma", "var_ma"])
    for i, r in enumerate(reps):
        if r is None:
            w.writerow([i, "", "", "", ""])
        else:
            w.writerow([i, repr(r.t_be), repr(r.var_be), repr(r.t_ma), repr(r.var_ma)])
    return buf.getvalue()


def _run_replicate(pop, pop_terms, terms, n, mode, k_max, m, rng) -> Replicate:
    idx = _draw_indices(pop.n_pixels, n, rng)
    forest_s = pop.forest[idx]
    y = pop.delta[idx]
    fit_rows = idx[forest_s]
    fm = FeatureMatrix([str(k) for k in fit_rows], terms, pop_terms[fit_rows], [])
    model = select_model(fm, pop.delta[fit_rows], mode, k_max=k_max, m=m)

    cols = [terms.index(t) for t in model.terms]
    pred = model.intercept + pop_terms[:, cols] @ np.asarray(model.coefficients)
    # population_mean accounting: non-forest pixels count as 0 over the extent
    synthetic_mean = math.fsum(pred[pop.forest]) / pop.n_pixels
    be = be_total(y, pop.area)
    ma = ma_total(y, pred[idx], forest_s.astype(float), synthetic_mean, pop.area)
    return Replicate(be.total, be.variance, ma.total, ma.variance)


def monte_carlo(
    config: SimConfig,
    n: int,
    replicates: int,
    *,
    mode: str = "bi_temporal",
    k_max: int = 3,
    m: int = 10,
    return_replicates: bool = False,
):
    """Repeat SRS -> model selection -> map prediction -> estimation.

    Per-replicate failures (e.g. no VIF-feasible model) are counted in the
    report and the run continues.
    """
    if replicates < 100:
        raise ValueError("replicates must be >= 100")
    pop = gen_population(config)
    terms = enumerate_terms(config.bands, mode)
    pop_terms = evaluate_terms(terms, pop.bands)

    reps: list[Replicate | None] = []
    failures = []
    for r in range(replicates):
        rng = make_rng(config.seed, STREAM_REPLICATE, r)
        try:
            reps.append(_run_replicate(pop, pop_terms, terms, n, mode, k_max, m, rng))
        except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
            reps.append(None)
            failures.append(f"replicate {r}: {type(exc).__name__}: {exc}")

    ok = [rep for rep in reps if rep is not None]
    if len(ok) < 2:
        raise RuntimeError(f"only {len(ok)} replicates succeeded; first failure: {failures[:1]}")
    t_be = np.array([rep.t_be for rep in ok])
    t_ma = np.array([rep.t_ma for rep in ok])
    v_be = np.array([rep.var_be for rep in ok])
    v_ma = np.array([rep.var_ma for rep in ok])

    def coverage(t, v):
        hits = 0
        for ti, vi in zip(t, v):
            lo, hi = confidence_interval(ti, math.sqrt(vi))
            hits += lo <= pop.true_total <= hi
        return float(hits / len(t))

    def mean(a):
        return math.fsum(a) / len(a)

    def var(a):
        mu = mean(a)
        return math.fsum((a - mu) ** 2) / (len(a) - 1)

    report = MCReport(
        R=replicates,
        n=n,
        mode=mode,
        true_total=pop.true_total,
        n_failed=len(failures),
        mean_t_be=mean(t_be),
        var_t_be=var(t_be),
        mean_var_be_hat=mean(v_be),
        mean_t_ma=mean(t_ma),
        var_t_ma=var(t_ma),
        mean_var_ma_hat=mean(v_ma),
        coverage_be=coverage(t_be, v_be),
        coverage_ma=coverage(t_ma, v_ma),
        swir_delta_correlation=pop.band_correlation(),
        failures=failures,
    )
    if return_replicates:
        return report, reps
    return report

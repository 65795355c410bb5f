"""Design-based totals of net ΔAGB: basic expansion and model-assisted.

Inputs are per-plot densities in t/ha and an area in ha, so totals come
out in tonnes and variances in t². :class:`EstimateReport` converts to
Mt (1 Mt = 1e6 t) once, when reporting.

Sums use :func:`math.fsum`, which is exactly rounded and therefore gives
the same bits for any summation order or partitioning.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_ingest import PlotRecord

TONNES_PER_MT = 1e6
Z95 = 1.96


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class TotalEstimate:
    total: float  # t
    variance: float  # t²

    @property
    def se(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class ModelAssistedEstimate(TotalEstimate):
    synthetic: float = 0.0  # t
    correction: float = 0.0  # t


def _expansion(values: np.ndarray, area: float) -> tuple[float, float]:
    """``(A/n) Σv`` and ``A² Σ(v - v̄)² / (n (n - 1))``."""
    n = values.shape[0]
    if n < 2:
        raise EstimationError(f"variance needs at least 2 plots, got {n}")
    s = math.fsum(values)
    mean = s / n
    ss = math.fsum((values - mean) ** 2)
    return area / n * s, area * area * ss / (n * (n - 1))


def plot_responses(plots: Sequence[PlotRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Per-plot ``y_i`` and forest indicator ``I_i``; non-forest plots get ``y_i = 0``."""
    forest = np.array([p.forest for p in plots], dtype=float)
    y = np.array([p.delta_agb if p.forest else 0.0 for p in plots], dtype=float)
    return y, forest


def be_total(y, area: float) -> TotalEstimate:
    """Basic expansion estimate from plot values ``y`` (t/ha) and area (ha).

    ``y`` may also be a sequence of :class:`PlotRecord`, in which case
    non-forest plots contribute zero.
    """
    y = _as_y(y)
    total, var = _expansion(y, area)
    return TotalEstimate(total, var)


def ma_total(y, predictions, forest, synthetic_mean: float, area: float) -> ModelAssistedEstimate:
    """Model-assisted estimate: synthetic map total plus a residual correction.

    Residuals are ``y_i - ŷ_i I_i``. ``synthetic_mean`` (t/ha) is the mean
    pixel prediction over the population, see
    :func:`agbchange.map_prediction.synthetic_mean_for_estimator`.
    """
    y = _as_y(y)
    yhat = np.asarray(predictions, dtype=float).ravel()
    ind = np.asarray(forest, dtype=float).ravel()
    if not (y.shape == yhat.shape == ind.shape):
        raise EstimationError("y, predictions and forest indicators must align")
    if not np.all((ind == 0) | (ind == 1)):
        raise EstimationError("forest indicator must be 0 or 1")
    resid = y - yhat * ind
    correction, var = _expansion(resid, area)
    synthetic = area * synthetic_mean
    return ModelAssistedEstimate(synthetic + correction, var, synthetic, correction)


def _as_y(y) -> np.ndarray:
    if len(y) and isinstance(y[0], PlotRecord):
        return plot_responses(y)[0]
    return np.asarray(y, dtype=float).ravel()


def relative_efficiency(var_be: float, var_ma: float) -> float:
    """``var_be / var_ma``; ``inf`` when the MA variance is zero."""
    if var_ma < 0 or var_be < 0:
        raise EstimationError("variances must be non-negative")
    if var_ma == 0:
        return math.inf
    return var_be / var_ma


def confidence_interval(total: float, se: float, level: float = 0.95) -> tuple[float, float]:
    """Normal-approximation interval; only the 95 % level is supported."""
    if level != 0.95:
        raise ValueError("only level=0.95 (z = 1.96) is supported")
    if se < 0:
        raise ValueError("se must be non-negative")
    return total - Z95 * se, total + Z95 * se


def _json_float(v: float | None):
    if v is None or math.isfinite(v):
        return v
    return "inf" if v > 0 else "-inf"


@dataclass
class EstimateReport:
    A: float
    n: int
    be: TotalEstimate
    ma: ModelAssistedEstimate

    @property
    def re(self) -> float:
        return relative_efficiency(self.be.variance, self.ma.variance)

    def to_dict(self) -> dict:
        mt = TONNES_PER_MT
        be_ci = confidence_interval(self.be.total / mt, self.be.se / mt)
        ma_ci = confidence_interval(self.ma.total / mt, self.ma.se / mt)
        return {
            "A_ha": self.A,
            "n": self.n,
            "t_be_Mt": self.be.total / mt,
            "var_be_Mt2": self.be.variance / mt**2,
            "se_be_Mt": self.be.se / mt,
            "t_ma_Mt": self.ma.total / mt,
            "var_ma_Mt2": self.ma.variance / mt**2,
            "se_ma_Mt": self.ma.se / mt,
            "synthetic_component_Mt": self.ma.synthetic / mt,
            "correction_component_Mt": self.ma.correction / mt,
            "re": _json_float(self.re),
            "ci95_be_Mt": list(be_ci),
            "ci95_ma_Mt": list(ma_ci),
        }

    def to_json(self, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, indent=2) + "\n"


def estimate(plots: Sequence[PlotRecord], predictions, synthetic_mean: float, area: float) -> EstimateReport:
    """Both estimators for one plot sample; ``predictions`` align with ``plots``."""
    y, forest = plot_responses(plots)
    return EstimateReport(
        A=area,
        n=len(plots),
        be=be_total(y, area),
        ma=ma_total(y, predictions, forest, synthetic_mean, area),
    )

"""Pixel-wise ΔAGB prediction, forest masking and map statistics.

Predictions are never truncated. A predicted pixel counts as out of range
when any model term lies outside the (min, max) seen in the training plots.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .data_ingest import GeometryError, RasterStack, check_geometry
from .features import TermSpec
from .subset_selection import ModelFit

MAP_NODATA = -9999.0
MAP_BAND = "dagb"
ACCOUNTING = ("population_mean", "forest_mean")


@dataclass
class MapStats:
    n_forest_pixels: int  # forest pixels with usable data (N)
    n_population_pixels: int  # mask pixels in {0, 1} minus unusable forest pixels
    n_nodata_in_mask: int  # forest pixels with nodata in any band
    prediction_sum: float  # t/ha summed over predicted pixels
    pixel_area: float  # ha
    out_of_range_fraction: float
    n_out_of_range: int
    prediction_min: float | None
    prediction_max: float | None

    @property
    def synthetic_mean(self) -> float:
        return synthetic_mean_for_estimator(self, "population_mean")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["synthetic_mean"] = self.synthetic_mean if self.n_population_pixels else None
        return d


def _term_key(term) -> str:
    return term.name if isinstance(term, TermSpec) else str(term)


def predict_point(model: ModelFit, term_values: Mapping) -> float:
    """``intercept + Σ coef · term`` for one set of term values.

    ``term_values`` is keyed by :class:`TermSpec` or canonical term name.
    """
    vals = {_term_key(k): v for k, v in term_values.items()}
    total = model.intercept
    for term, coef in zip(model.terms, model.coefficients):
        if term.name not in vals:
            raise KeyError(f"missing value for model term {term.name}")
        total += coef * float(vals[term.name])
    return total


def _band_lookup(stacks: Sequence[RasterStack], rows: slice) -> dict[tuple[str, str], np.ndarray]:
    return {(s.epoch_label, b): a[rows].astype(float) for s in stacks for b, a in s.bands.items()}


def _predict_block(model: ModelFit, stacks, valid: np.ndarray, rows: slice):
    lookup = _band_lookup(stacks, rows)
    v = valid[rows]
    pred = np.full(v.shape, model.intercept, dtype=float)
    oor = np.zeros(v.shape, dtype=bool)
    for i, (term, coef) in enumerate(zip(model.terms, model.coefficients)):
        tv = term.evaluate(lookup)
        pred = pred + coef * tv
        if model.training_ranges is not None:
            lo, hi = model.training_ranges[i]
            oor |= (tv < lo) | (tv > hi)
    return pred, oor


def _stacks_for_model(model: ModelFit, stacks) -> list[RasterStack]:
    if isinstance(stacks, Mapping):
        stacks = [
            s if s.epoch_label == label else _relabel(s, label) for label, s in stacks.items()
        ]
    stacks = list(stacks)
    labels = {s.epoch_label for s in stacks}
    for t in model.terms:
        if t.epoch not in labels:
            raise KeyError(f"model term {t.name} needs a stack for epoch {t.epoch!r}")
    return stacks


def _relabel(s: RasterStack, label: str) -> RasterStack:
    return RasterStack(s.ncols, s.nrows, s.x0, s.y0, s.pixel_size, s.nodata, dict(s.bands), label, s._tokens)


def predict_map(model: ModelFit, stacks, mask: RasterStack, workers: int = 1) -> tuple[RasterStack, MapStats]:
    """Apply ``model`` to every forest pixel.

    ``stacks`` is a sequence of epoch-labelled stacks or a mapping
    ``{epoch: stack}``. Pixels outside the forest mask, or with nodata in
    any input band, become ``-9999`` in the returned single-band map.
    Rows are split into ``workers`` blocks; the statistics do not depend
    on the split.
    """
    stacks = _stacks_for_model(model, stacks)
    try:
        check_geometry([mask, *stacks])
    except GeometryError as exc:
        raise GeometryError(f"mask/stack {exc}") from None
    if list(mask.bands) != ["mask"]:
        raise ValueError(f"forest mask must have a single band named 'mask', got {list(mask.bands)}")

    m = mask.bands["mask"]
    mask_nodata = mask.nodata_mask("mask")
    valid_mask = ~mask_nodata
    if np.any(valid_mask & (m != 0) & (m != 1)):
        raise ValueError("forest mask values must be 0, 1 or nodata")
    forest = valid_mask & (m == 1)
    band_nodata = np.zeros_like(forest)
    for s in stacks:
        band_nodata |= s.any_nodata()
    predicted = forest & ~band_nodata

    nrows = mask.nrows
    workers = max(1, min(int(workers), max(nrows, 1)))
    bounds = np.linspace(0, nrows, workers + 1).astype(int)
    blocks = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
    if workers == 1:
        parts = [_predict_block(model, stacks, predicted, b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda b: _predict_block(model, stacks, predicted, b), blocks))
    pred = np.concatenate([p for p, _ in parts], axis=0) if parts else np.empty((0, mask.ncols))
    oor = np.concatenate([o for _, o in parts], axis=0) if parts else np.empty((0, mask.ncols), bool)

    values = pred[predicted]
    n_pred = int(values.size)
    n_oor = int(np.count_nonzero(oor & predicted))
    stats = MapStats(
        n_forest_pixels=n_pred,
        n_population_pixels=int(np.count_nonzero(valid_mask)) - int(np.count_nonzero(forest & band_nodata)),
        n_nodata_in_mask=int(np.count_nonzero(forest & band_nodata)),
        prediction_sum=math.fsum(values),
        pixel_area=mask.geometry.pixel_area_ha,
        out_of_range_fraction=n_oor / n_pred if n_pred else 0.0,
        n_out_of_range=n_oor,
        prediction_min=float(values.min()) if n_pred else None,
        prediction_max=float(values.max()) if n_pred else None,
    )

    out = np.where(predicted, pred, MAP_NODATA).astype("<f4")
    dmap = RasterStack(
        mask.ncols, mask.nrows, mask.x0, mask.y0, mask.pixel_size, MAP_NODATA, {MAP_BAND: out}, "dagb",
        {k: v for k, v in mask._tokens.items() if k != "nodata"},
    )
    return dmap, stats


def synthetic_mean_for_estimator(stats: MapStats, accounting: str = "population_mean") -> float:
    """Mean pixel prediction (t/ha) fed to the model-assisted estimator.

    ``population_mean`` divides the forest prediction sum by every usable
    pixel in the study-area extent, so non-forest pixels count as zero.
    ``forest_mean`` divides by the number of predicted forest pixels.
    """
    if accounting == "population_mean":
        denom = stats.n_population_pixels
    elif accounting == "forest_mean":
        denom = stats.n_forest_pixels
    else:
        raise ValueError(f"accounting must be one of {ACCOUNTING}, got {accounting!r}")
    if denom == 0:
        if accounting == "population_mean" and stats.n_forest_pixels == 0:
            raise ValueError("empty study-area extent: no usable pixels")
        raise ValueError(f"zero denominator for {accounting}")
    return stats.prediction_sum / denom

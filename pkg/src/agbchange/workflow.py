"""End-to-end fitting and estimation on plot tables and raster stacks."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .data_ingest import PlotRecord, PlotSpectra, RasterStack, extract_plot_spectra
from .estimation import EstimateReport, estimate
from .features import FeatureMatrix, build_design, enumerate_terms
from .map_prediction import MapStats, predict_map, synthetic_mean_for_estimator
from .subset_selection import ModelFit, select_model


def _stack_list(stacks) -> list[RasterStack]:
    if isinstance(stacks, Mapping):
        out = []
        for label, s in stacks.items():
            if s.epoch_label != label:
                s = RasterStack(s.ncols, s.nrows, s.x0, s.y0, s.pixel_size, s.nodata, s.bands, label, s._tokens)
            out.append(s)
        return out
    return list(stacks)


def candidate_terms(stacks, mode: str):
    stacks = _stack_list(stacks)
    return enumerate_terms({s.epoch_label: s.band_names for s in stacks}, mode)


def fitting_design(plots: Sequence[PlotRecord], spectra: PlotSpectra, mode: str, terms=None) -> tuple[FeatureMatrix, np.ndarray]:
    """Design and response over forest plots with usable spectra."""
    if terms is None:
        bands = {e: spectra.bands_for(e) for e in ("t1", "t2") if spectra.bands_for(e)}
        terms = enumerate_terms(bands, mode)
    fm = build_design(spectra, terms)
    by_id = {p.plot_id: p for p in plots}
    keep = np.array([by_id[r].forest == 1 for r in fm.row_ids], dtype=bool)
    fm = fm.subset_rows(keep)
    y = np.array([by_id[r].delta_agb for r in fm.row_ids], dtype=float)
    return fm, y


def fit_model(plots: Sequence[PlotRecord], stacks, mode: str, k_max: int = 5, m: int = 50) -> tuple[ModelFit, FeatureMatrix]:
    stacks = _stack_list(stacks)
    spectra = extract_plot_spectra(plots, stacks)
    fm, y = fitting_design(plots, spectra, mode, candidate_terms(stacks, mode))
    model = select_model(fm, y, mode, k_max=k_max, m=m)
    return model, fm


def plot_predictions(model: ModelFit, spectra: PlotSpectra) -> np.ndarray:
    """Model predictions at plot centres; plots with unusable spectra get 0."""
    usable = spectra.usable
    pred = np.zeros(len(spectra.plot_ids))
    if usable.any():
        sub = {k: v[usable] for k, v in spectra.values.items()}
        vals = np.full(int(usable.sum()), model.intercept, dtype=float)
        for term, coef in zip(model.terms, model.coefficients):
            vals = vals + coef * term.evaluate(sub)
        pred[usable] = vals
    return pred


def run_estimate(
    plots: Sequence[PlotRecord],
    stacks,
    mask: RasterStack,
    model: ModelFit,
    area: float,
    accounting: str = "population_mean",
    workers: int = 1,
) -> tuple[EstimateReport, RasterStack, MapStats, float]:
    """Map the model, then compute both estimators.

    Returns the report, the ΔAGB map, its statistics and the synthetic mean
    that was used.
    """
    stacks = _stack_list(stacks)
    dmap, stats = predict_map(model, stacks, mask, workers=workers)
    synthetic = synthetic_mean_for_estimator(stats, accounting)
    spectra = extract_plot_spectra(plots, stacks)
    report = estimate(plots, plot_predictions(model, spectra), synthetic, area)
    return report, dmap, stats, synthetic

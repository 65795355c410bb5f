"""Candidate predictors: raw bands and normalized-difference band indices."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .data_ingest import PlotSpectra

EPOCHS = ("t1", "t2")
MODES = ("bi_temporal", "uni_temporal")

_NAME_RE = re.compile(r"^(raw|ndi)\(([^,()\s]+)(?:,([^,()\s]+))?\)@(\S+)$")


def ndi(a, b, *, return_degenerate: bool = False):
    """Normalized difference ``(a - b) / (a + b)``.

    Where ``a + b == 0`` the index is defined as 0. With
    ``return_degenerate=True`` a boolean flag (array) marking those
    positions is returned alongside the value.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = a + b
    degenerate = s == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(degenerate, 0.0, (a - b) / np.where(degenerate, 1.0, s))
    if out.ndim == 0:
        out = float(out)
        degenerate = bool(degenerate)
    if return_degenerate:
        return out, degenerate
    return out


@dataclass(frozen=True)
class TermSpec:
    kind: str
    epoch: str
    band_a: str
    band_b: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("raw", "ndi"):
            raise ValueError(f"unknown term kind {self.kind!r}")
        if self.kind == "ndi":
            if self.band_b is None or self.band_b == self.band_a:
                raise ValueError("ndi terms need two distinct bands")
        elif self.band_b is not None:
            raise ValueError("raw terms take a single band")

    @property
    def name(self) -> str:
        if self.kind == "raw":
            return f"raw({self.band_a})@{self.epoch}"
        return f"ndi({self.band_a},{self.band_b})@{self.epoch}"

    @property
    def bands(self) -> tuple[str, ...]:
        return (self.band_a,) if self.band_b is None else (self.band_a, self.band_b)

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, name: str) -> "TermSpec":
        m = _NAME_RE.match(name.strip())
        if not m:
            raise ValueError(f"cannot parse term name {name!r}")
        kind, a, b, epoch = m.groups()
        return cls(kind, epoch, a, b)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "epoch": self.epoch, "bands": list(self.bands)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TermSpec":
        bands = list(d["bands"])
        return cls(d["kind"], d["epoch"], bands[0], bands[1] if len(bands) > 1 else None)

    def evaluate(self, values: Mapping[tuple[str, str], np.ndarray]) -> np.ndarray:
        """Evaluate on a ``{(epoch, band): array}`` lookup."""
        try:
            a = values[(self.epoch, self.band_a)]
            if self.kind == "raw":
                return np.asarray(a, dtype=float)
            b = values[(self.epoch, self.band_b)]
        except KeyError as exc:
            raise KeyError(f"term {self.name}: band {exc.args[0]} not available") from None
        return np.asarray(ndi(a, b), dtype=float)


def enumerate_terms(band_names: Mapping[str, Sequence[str]] | Sequence[str], mode: str) -> list[TermSpec]:
    """All raw bands plus every within-epoch band pair index.

    ``band_names`` is either one list used for every epoch, or a mapping
    ``{"t1": [...], "t2": [...]}``. ``uni_temporal`` keeps only t2 terms.
    Pairs follow band-list order, one orientation per pair.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    epochs = ("t2",) if mode == "uni_temporal" else EPOCHS
    if not isinstance(band_names, Mapping):
        band_names = {e: list(band_names) for e in epochs}

    terms: list[TermSpec] = []
    for epoch in epochs:
        names = list(band_names.get(epoch, []))
        if not names:
            raise ValueError(f"empty band list for epoch {epoch!r}")
        if len(set(names)) != len(names):
            raise ValueError(f"band names for {epoch!r} are not unique: {names}")
        terms.extend(TermSpec("raw", epoch, b) for b in names)
        terms.extend(TermSpec("ndi", epoch, a, b) for a, b in combinations(names, 2))
    return terms


@dataclass
class FeatureMatrix:
    row_ids: list[str]
    terms: list[TermSpec]
    values: np.ndarray  # (n_rows, n_terms)
    dropped: list[str]  # row ids excluded because of flagged spectra

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.row_ids), len(self.terms))
        if np.isnan(self.values).any():
            raise ValueError("feature matrix contains NaN")

    @property
    def term_names(self) -> list[str]:
        return [t.name for t in self.terms]

    @property
    def ranges(self) -> list[tuple[float, float]]:
        """Observed (min, max) per column."""
        if not self.row_ids:
            return [(np.nan, np.nan)] * len(self.terms)
        return [(float(lo), float(hi)) for lo, hi in zip(self.values.min(0), self.values.max(0))]

    def subset_rows(self, keep: np.ndarray) -> "FeatureMatrix":
        keep = np.asarray(keep, dtype=bool)
        ids = [r for r, k in zip(self.row_ids, keep) if k]
        gone = [r for r, k in zip(self.row_ids, keep) if not k]
        return FeatureMatrix(ids, self.terms, self.values[keep], self.dropped + gone)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row_id", *self.term_names])
        for rid, row in zip(self.row_ids, self.values):
            w.writerow([rid, *(repr(float(v)) for v in row)])
        return buf.getvalue()


def evaluate_terms(terms: Sequence[TermSpec], values: Mapping[tuple[str, str], np.ndarray]) -> np.ndarray:
    """Stack term evaluations column-wise."""
    cols = [t.evaluate(values) for t in terms]
    if not cols:
        return np.empty((0, 0))
    return np.column_stack(cols)


def build_design(spectra: PlotSpectra, terms: Sequence[TermSpec]) -> FeatureMatrix:
    """Evaluate ``terms`` on the usable plots of ``spectra``."""
    keep = spectra.usable
    for t in terms:
        for b in t.bands:
            if (t.epoch, b) not in spectra.values:
                raise KeyError(f"term {t.name}: band {b!r} at {t.epoch} not in spectra")
    sub = {k: v[keep] for k, v in spectra.values.items()}
    ids = [pid for pid, k in zip(spectra.plot_ids, keep) if k]
    dropped = [pid for pid, k in zip(spectra.plot_ids, keep) if not k]
    values = evaluate_terms(terms, sub) if terms else np.empty((len(ids), 0))
    return FeatureMatrix(ids, list(terms), values.reshape(len(ids), len(terms)), dropped)

"""Best-subset search (branch and bound) with BIC ranking and a VIF screen.

Selection happens in two steps. :func:`best_subsets_bnb` keeps the ``m``
lowest-RSS subsets of every size up to ``k_max``. :func:`select_model`
pools them, ranks by BIC and returns the best candidate whose largest
variance inflation factor is below 5.
"""

from __future__ import annotations

import bisect
import functools
import json
import math
import warnings
from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Mapping, Sequence

import numpy as np

from .features import MODES, FeatureMatrix, TermSpec
from .regression import (
    InsufficientDataError,
    SingularDesignError,
    bic,
    bic_rank,
    max_vif,
    ols_fit,
    subset_rss,
)

VIF_LIMIT = 5.0
BIC_TIE_TOL = 1e-9
EXHAUSTIVE_LIMIT = 2**20
# Relative slack on the pruning bound so float noise in the superset fit
# can never prune a subset that belongs in the output.
_BOUND_SLACK = 1e-9


class SelectionInfeasibleError(RuntimeError):
    def __init__(self, message: str, best: "CandidateModel | None" = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class RankedSubset:
    columns: tuple[int, ...]
    rss: float

    @property
    def key(self) -> tuple[float, tuple[int, ...]]:
        return (self.rss, self.columns)


SubsetRanking = dict[int, list[RankedSubset]]


def _as_arrays(X, y) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(X, FeatureMatrix):
        X = X.values
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    return X, y


def _check_inputs(X: np.ndarray, k_max: int, m: int) -> int:
    n, p = X.shape
    if p == 0:
        raise ValueError("no candidate columns")
    if m < 1 or k_max < 1:
        raise ValueError("k_max and m must be >= 1")
    if k_max > p:
        warnings.warn(f"k_max={k_max} exceeds the {p} candidate columns; clamped to {p}", stacklevel=3)
        k_max = p
    if n < k_max + 2:
        raise InsufficientDataError(f"need n >= k_max + 2 rows, got n={n}, k_max={k_max}")
    return k_max


class _TopM:
    """Per-size sorted lists holding the m best (rss, columns) keys."""

    def __init__(self, k_max: int, m: int):
        self.m = m
        self.lists: dict[int, list[tuple[float, tuple[int, ...]]]] = {k: [] for k in range(1, k_max + 1)}

    def offer(self, cols: tuple[int, ...], rss: float) -> None:
        lst = self.lists[len(cols)]
        key = (rss, cols)
        if len(lst) == self.m and key >= lst[-1]:
            return
        bisect.insort(lst, key)
        if len(lst) > self.m:
            lst.pop()

    def worst(self, k: int) -> float:
        lst = self.lists[k]
        return lst[-1][0] if len(lst) == self.m else math.inf

    def result(self) -> SubsetRanking:
        return {k: [RankedSubset(c, r) for r, c in lst] for k, lst in self.lists.items()}


def best_subsets_bnb(X, y, k_max: int = 5, m: int = 50) -> SubsetRanking:
    """Exact top-``m`` subsets by RSS for every size ``1..k_max``.

    Depth-first enumeration in which each node fixes a set ``F`` and may
    still add columns from a suffix ``R``. Since RSS cannot grow when
    columns are added, ``rss(F + R)`` bounds every subset under the node;
    the node is dropped once that bound exceeds the current m-th best for
    every reachable size. Ties are broken by the sorted column tuple.
    """
    X, y = _as_arrays(X, y)
    k_max = _check_inputs(X, k_max, m)
    n, p = X.shape

    # Strong single predictors first: later suffixes then hold weak columns,
    # which gives high bounds and early pruning.
    single = [subset_rss(X, y, (j,)) for j in range(p)]
    order = sorted(range(p), key=lambda j: (single[j], j))

    top = _TopM(k_max, m)

    def rss_of(cols: tuple[int, ...]) -> float:
        if len(cols) == 1:
            return single[cols[0]]
        return subset_rss(X, y, cols)

    def visit(fixed: tuple[int, ...], start: int) -> None:
        depth = len(fixed)
        rest = order[start:]
        if not rest or depth == k_max:
            return
        sizes = range(depth + 1, min(k_max, depth + len(rest)) + 1)
        if all(top.worst(k) < math.inf for k in sizes) and depth + len(rest) < n - 1:
            bound = subset_rss(X, y, tuple(sorted(fixed + tuple(rest))))
            if all(bound * (1 - _BOUND_SLACK) > top.worst(k) for k in sizes):
                return
        for pos in range(start, p):
            child = tuple(sorted(fixed + (order[pos],)))
            top.offer(child, rss_of(child))
            visit(child, pos + 1)

    visit((), 0)
    return top.result()


def exhaustive_best_subsets(X, y, k_max: int = 5, m: int = 50) -> SubsetRanking:
    """Reference ranking by full enumeration of all subsets up to ``k_max``."""
    X, y = _as_arrays(X, y)
    k_max = _check_inputs(X, k_max, m)
    p = X.shape[1]
    total = sum(comb(p, k) for k in range(1, k_max + 1))
    if total > EXHAUSTIVE_LIMIT:
        raise ValueError(f"exhaustive search over {total} subsets exceeds the limit of {EXHAUSTIVE_LIMIT}")
    out: SubsetRanking = {}
    for k in range(1, k_max + 1):
        keys = sorted((subset_rss(X, y, cols), cols) for cols in combinations(range(p), k))
        out[k] = [RankedSubset(c, r) for r, c in keys[:m]]
    return out


# ---------------------------------------------------------------------------
# Model selection
# ---------------------------------------------------------------------------


@dataclass
class CandidateModel:
    terms: tuple[TermSpec, ...]
    columns: tuple[int, ...]
    rss: float
    bic: float | None
    max_vif: float
    fit: object | None = None  # OlsFit when the design is non-singular

    @property
    def feasible(self) -> bool:
        return self.max_vif < VIF_LIMIT and self.fit is not None

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.terms)


def _compare(a: CandidateModel, b: CandidateModel) -> int:
    ra, rb = bic_rank(a.bic), bic_rank(b.bic)
    if ra[0] != rb[0]:
        return -1 if ra[0] < rb[0] else 1
    if abs(ra[1] - rb[1]) > BIC_TIE_TOL:
        return -1 if ra[1] < rb[1] else 1
    if len(a.columns) != len(b.columns):
        return -1 if len(a.columns) < len(b.columns) else 1
    if a.names != b.names:
        return -1 if a.names < b.names else 1
    return 0


def rank_candidates(candidates: Sequence[CandidateModel]) -> list[CandidateModel]:
    """Ascending BIC; ties within 1e-9 go to fewer terms, then smaller names."""
    return sorted(candidates, key=functools.cmp_to_key(_compare))


@dataclass
class ModelFit:
    """A fitted linear ΔAGB model and what is needed to apply it."""

    mode: str
    terms: list[TermSpec]
    intercept: float
    coefficients: list[float]
    n: int | None = None
    adj_r2: float | None = None
    bic: float | None = None
    max_vif: float | None = None
    training_ranges: list[tuple[float, float]] | None = None
    candidate_pool_size: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.coefficients = [float(c) for c in self.coefficients]
        if len(self.coefficients) != len(self.terms):
            raise ValueError("coefficients must align with terms")
        if self.training_ranges is not None:
            self.training_ranges = [(float(lo), float(hi)) for lo, hi in self.training_ranges]
            if len(self.training_ranges) != len(self.terms):
                raise ValueError("training ranges must cover every term")

    @property
    def term_names(self) -> list[str]:
        return [t.name for t in self.terms]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "terms": [t.to_dict() for t in self.terms],
            "term_names": self.term_names,
            "intercept": self.intercept,
            "coefficients": list(self.coefficients),
            "n": self.n,
            "adj_r2": self.adj_r2,
            "bic": self.bic,
            "max_vif": self.max_vif,
            "training_ranges": None
            if self.training_ranges is None
            else [[lo, hi] for lo, hi in self.training_ranges],
            "candidate_pool_size": self.candidate_pool_size,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelFit":
        ranges = d.get("training_ranges")
        return cls(
            mode=d["mode"],
            terms=[TermSpec.from_dict(t) for t in d["terms"]],
            intercept=float(d["intercept"]),
            coefficients=[float(c) for c in d["coefficients"]],
            n=d.get("n"),
            adj_r2=d.get("adj_r2"),
            bic=d.get("bic"),
            max_vif=d.get("max_vif"),
            training_ranges=None if ranges is None else [tuple(r) for r in ranges],
            candidate_pool_size=d.get("candidate_pool_size"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelFit":
        return cls.from_dict(json.loads(text))


def evaluate_candidates(X: FeatureMatrix, y, ranking: SubsetRanking) -> list[CandidateModel]:
    Xv, y = _as_arrays(X, y)
    n = Xv.shape[0]
    out = []
    for k, subsets in ranking.items():
        for s in subsets:
            cols = s.columns
            try:
                mv = max_vif(Xv[:, cols])
            except ValueError:  # constant column
                mv = math.inf
            fit = None
            if mv < math.inf:
                try:
                    fit = ols_fit(Xv[:, cols], y)
                except SingularDesignError:
                    mv = math.inf
            out.append(
                CandidateModel(
                    terms=tuple(X.terms[c] for c in cols),
                    columns=cols,
                    rss=s.rss,
                    bic=bic(s.rss, n, len(cols)),
                    max_vif=mv,
                    fit=fit,
                )
            )
    return out


def select_model(X: FeatureMatrix, y, mode: str, k_max: int = 5, m: int = 50) -> ModelFit:
    """Lowest-BIC pooled candidate whose largest VIF is below 5."""
    ranking = best_subsets_bnb(X, y, k_max=k_max, m=m)
    candidates = rank_candidates(evaluate_candidates(X, y, ranking))
    for cand in candidates:
        if cand.feasible:
            fit = cand.fit
            ranges = X.ranges
            return ModelFit(
                mode=mode,
                terms=list(cand.terms),
                intercept=fit.intercept,
                coefficients=list(fit.coefficients),
                n=fit.n,
                adj_r2=fit.adj_r2,
                bic=cand.bic,
                max_vif=cand.max_vif,
                training_ranges=[ranges[c] for c in cand.columns],
                candidate_pool_size=len(X.terms),
            )
    best = candidates[0] if candidates else None
    detail = f"; best infeasible: {list(best.names)} (max VIF {best.max_vif})" if best else ""
    raise SelectionInfeasibleError(f"no candidate model passes the VIF < {VIF_LIMIT} screen{detail}", best)

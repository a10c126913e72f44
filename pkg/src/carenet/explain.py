"""Shapley-value attribution over pooled presence features.

Two estimators: exact subset enumeration (for small feature subsets; the
oracle) and permutation sampling (for all 131 features). The model under
explanation is any batched function f: (m, d) array -> (m,) array; the
pipeline applies it to the attribute-only model's pooled feature vectors.

Baseline: the all-zeros vector ("no attribute present"), recorded in every
result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ModelFn = Callable[[np.ndarray], np.ndarray]

MAX_EXACT_FEATURES = 20
EVAL_CHUNK = 8192


class SubsetSizeError(ValueError):
    """Too many features for exact enumeration; use shapley_sampled."""


@dataclass
class ShapResult:
    """Per-feature attributions for one instance.

    ``values[j]`` is feature j's Shapley value; features outside the
    explained subset (exact mode) hold 0. ``sum(values) = model_output -
    baseline_output`` up to numerical residual (exact mode) or sampling
    noise (reported via standard_errors).
    """

    values: np.ndarray
    baseline_output: float
    model_output: float
    baseline: np.ndarray
    feature_subset: tuple[int, ...] | None = None
    standard_errors: np.ndarray | None = None
    n_permutations: int | None = None

    @property
    def efficiency_residual(self) -> float:
        return float(abs(self.values.sum() - (self.model_output - self.baseline_output)))


def _eval_chunked(model_fn: ModelFn, X: np.ndarray) -> np.ndarray:
    outs = []
    for start in range(0, X.shape[0], EVAL_CHUNK):
        outs.append(np.asarray(model_fn(X[start : start + EVAL_CHUNK]), dtype=np.float64))
    return np.concatenate(outs) if outs else np.empty(0)


def shapley_exact(
    model_fn: ModelFn,
    x: np.ndarray,
    baseline: np.ndarray,
    feature_subset: Sequence[int] | None = None,
) -> ShapResult:
    """Exact Shapley values over a feature subset by full enumeration.

    Features outside the subset stay fixed at their value in ``x``; the
    effective baseline is therefore x with the subset replaced by the
    baseline values.
    """
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    if x.shape != baseline.shape or x.ndim != 1:
        raise ValueError("x and baseline must be 1-d of equal length")
    subset = tuple(range(x.size)) if feature_subset is None else tuple(feature_subset)
    s = len(subset)
    if s > MAX_EXACT_FEATURES:
        raise SubsetSizeError(
            f"exact enumeration supports at most {MAX_EXACT_FEATURES} features, "
            f"got {s}; use shapley_sampled"
        )
    if len(set(subset)) != s:
        raise ValueError("feature_subset has duplicates")

    # Evaluate the model at all 2^s coalitions; mask bit i set means
    # feature subset[i] takes its value from x.
    n_masks = 1 << s
    Z = np.tile(x, (n_masks, 1))
    eff_baseline = x.copy()
    eff_baseline[list(subset)] = baseline[list(subset)]
    for m in range(n_masks):
        row = eff_baseline.copy()
        for i in range(s):
            if m >> i & 1:
                row[subset[i]] = x[subset[i]]
        Z[m] = row
    v = _eval_chunked(model_fn, Z)

    # Classic subset-weighted combination.
    fact = [1.0] * (s + 1)
    for i in range(1, s + 1):
        fact[i] = fact[i - 1] * i
    sizes = np.array([bin(m).count("1") for m in range(n_masks)])
    values = np.zeros_like(x)
    for i in range(s):
        bit = 1 << i
        without = np.flatnonzero((np.arange(n_masks) & bit) == 0)
        t = sizes[without]
        w = np.array([fact[ti] * fact[s - 1 - ti] / fact[s] for ti in t])
        values[subset[i]] = float(np.sum(w * (v[without | bit] - v[without])))

    return ShapResult(
        values=values,
        baseline_output=float(v[0]),
        model_output=float(v[-1]),
        baseline=baseline.copy(),
        feature_subset=subset,
    )


def shapley_sampled(
    model_fn: ModelFn,
    x: np.ndarray,
    baseline: np.ndarray,
    n_permutations: int,
    seed: int = 0,
) -> ShapResult:
    """Permutation-sampling estimate over all features; deterministic per
    seed, with per-feature standard errors."""
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    if x.shape != baseline.shape or x.ndim != 1:
        raise ValueError("x and baseline must be 1-d of equal length")
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    d = x.size
    rng = np.random.default_rng(seed)

    mean = np.zeros(d)
    m2 = np.zeros(d)
    f_base = float(_eval_chunked(model_fn, baseline[None, :])[0])
    f_x = float(_eval_chunked(model_fn, x[None, :])[0])

    # Evaluate permutations in blocks: each permutation contributes d+1
    # cumulative coalitions, built as one (d+1, d) matrix.
    block = max(1, EVAL_CHUNK // (d + 1))
    done = 0
    while done < n_permutations:
        n_block = min(block, n_permutations - done)
        rows = []
        perms = []
        for _ in range(n_block):
            perm = rng.permutation(d)
            perms.append(perm)
            Z = np.tile(baseline, (d + 1, 1))
            chosen = baseline.copy()
            for pos, j in enumerate(perm, start=1):
                chosen[j] = x[j]
                Z[pos] = chosen
            rows.append(Z)
        v = _eval_chunked(model_fn, np.concatenate(rows, axis=0))
        for b, perm in enumerate(perms):
            vals = v[b * (d + 1) : (b + 1) * (d + 1)]
            contrib = np.empty(d)
            contrib[perm] = np.diff(vals)
            done += 1
            delta = contrib - mean
            mean += delta / done
            m2 += delta * (contrib - mean)
    se = np.sqrt(m2 / n_permutations / max(n_permutations - 1, 1))

    return ShapResult(
        values=mean,
        baseline_output=f_base,
        model_output=f_x,
        baseline=baseline.copy(),
        standard_errors=se,
        n_permutations=n_permutations,
    )


@dataclass
class AttributeRanking:
    """Attributes ordered by mean |Shapley value| across a cohort."""

    order: list[int]  # feature indices, descending mean |value|
    mean_abs: np.ndarray
    value_min: np.ndarray
    value_max: np.ndarray
    names: list[str] = field(default_factory=list)

    def rank_of(self, feature: int) -> int:
        """1-based rank of a feature index."""
        return self.order.index(feature) + 1

    def rows(self) -> list[dict]:
        out = []
        for rank, j in enumerate(self.order, start=1):
            out.append(
                {
                    "rank": rank,
                    "feature": j,
                    "name": self.names[j] if self.names else str(j),
                    "mean_abs_shap": float(self.mean_abs[j]),
                    "min": float(self.value_min[j]),
                    "max": float(self.value_max[j]),
                }
            )
        return out


def rank_attributes(
    results: Sequence[ShapResult], names: Sequence[str] | None = None
) -> AttributeRanking:
    """Cohort-level ranking by mean |value|, ties broken by feature index."""
    if not results:
        raise ValueError("need at least one ShapResult")
    V = np.stack([r.values for r in results])
    mean_abs = np.abs(V).mean(axis=0)
    order = sorted(range(V.shape[1]), key=lambda j: (-mean_abs[j], j))
    return AttributeRanking(
        order=order,
        mean_abs=mean_abs,
        value_min=V.min(axis=0),
        value_max=V.max(axis=0),
        names=list(names) if names is not None else [],
    )

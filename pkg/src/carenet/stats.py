"""Confounder correlation analysis: Pearson and Spearman coefficients with
two-sided p-values from the Student-t transform.

p = I_{df/(df+t^2)}(df/2, 1/2) with t = r * sqrt(df / (1 - r^2)), df = n-2,
where I is the regularized incomplete beta function. Constant inputs are an
explicit error state: the report marks them undefined instead of emitting a
fabricated zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .synth import CANCER_TYPES, PatientRecord

CONFOUNDERS = ("gender", "cancer_stage", "age", "insurance")

# Binary encodings (any consistent coding gives the same |r|).
_ENCODERS = {
    "gender": lambda p: 1.0 if p.gender == "female" else 0.0,
    "cancer_stage": lambda p: 1.0 if p.cancer_stage == 3 else 0.0,
    "age": lambda p: float(p.age),
    "insurance": lambda p: 1.0 if p.insurance == "private" else 0.0,
}


class ConstantInputError(ValueError):
    """Correlation against a constant vector is undefined."""


@dataclass(frozen=True)
class CorrelationEntry:
    cancer_type: str
    variable: str
    n: int
    pearson_r: float | None
    pearson_p: float | None
    spearman_rho: float | None
    spearman_p: float | None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "cancer_type": self.cancer_type,
            "variable": self.variable,
            "n": self.n,
            "pearson_r": self.pearson_r,
            "pearson_p": self.pearson_p,
            "spearman_rho": self.spearman_rho,
            "spearman_p": self.spearman_p,
            "note": self.note,
        }


def _validate_pair(x: np.ndarray, y: np.ndarray) -> None:
    if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
        raise ValueError("x and y must be 1-d vectors of equal length")
    if x.size < 3:
        raise ValueError(f"need at least 3 samples, got {x.size}")
    if np.ptp(x) == 0.0:
        raise ConstantInputError("x is constant; correlation undefined")
    if np.ptp(y) == 0.0:
        raise ConstantInputError("y is constant; correlation undefined")


def t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided tail probability of Student-t via the regularized
    incomplete beta function."""
    t2 = t * t
    return float(betainc(0.5 * df, 0.5, df / (df + t2)))


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Sample Pearson r with its two-sided p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _validate_pair(x, y)
    xm = x - x.mean()
    ym = y - y.mean()
    r = float(xm @ ym / np.sqrt((xm @ xm) * (ym @ ym)))
    r = max(-1.0, min(1.0, r))
    df = x.size - 2
    if abs(r) == 1.0:
        return r, 0.0
    t = r * np.sqrt(df / (1.0 - r * r))
    return r, t_sf_two_sided(t, df)


def average_ranks(x: np.ndarray) -> np.ndarray:
    """Ranks starting at 1; ties receive the mean of their rank range."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Spearman rho: Pearson applied to average-ranked data."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _validate_pair(x, y)
    return pearson(average_ranks(x), average_ranks(y))


def confounder_report(
    patients: Sequence[PatientRecord], per_cancer_type: bool = True
) -> list[CorrelationEntry]:
    """Correlate survival with each confounder, per cancer type (default)
    or pooled."""
    groups: list[tuple[str, list[PatientRecord]]]
    if per_cancer_type:
        groups = [
            (ct, [p for p in patients if p.cancer_type == ct]) for ct in CANCER_TYPES
        ]
        groups = [(ct, ps) for ct, ps in groups if ps]
    else:
        groups = [("all", list(patients))]
    if not groups:
        raise ValueError("no patients to analyze")

    entries = []
    for ct, ps in groups:
        survived = np.array([1.0 if p.survived else 0.0 for p in ps])
        for var in CONFOUNDERS:
            values = np.array([_ENCODERS[var](p) for p in ps])
            try:
                r, rp = pearson(values, survived)
                rho, rhop = spearman(values, survived)
                entries.append(
                    CorrelationEntry(ct, var, len(ps), r, rp, rho, rhop)
                )
            except ConstantInputError as e:
                entries.append(
                    CorrelationEntry(
                        ct, var, len(ps), None, None, None, None, note=str(e)
                    )
                )
    return entries

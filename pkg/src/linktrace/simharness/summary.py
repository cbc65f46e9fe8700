"""Monte Carlo summaries: bias, sd, mse, efficiency, coverage, parabola fit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

INF = float("inf")


@dataclass(frozen=True)
class SummaryRow:
    actual: float
    e_est: float
    bias: float
    sd: float
    mse: float


def summarize(estimates, actual: float) -> SummaryRow:
    """E.est, bias, sd and mse over replications.

    sd divides by the number of replications, so mse = sd^2 + bias^2.
    """
    x = np.asarray(estimates, dtype=float)
    if x.size == 0:
        raise ValueError("no estimates to summarize")
    m = float(np.mean(x))
    return SummaryRow(
        actual=float(actual),
        e_est=m,
        bias=m - actual,
        sd=float(np.sqrt(np.mean((x - m) ** 2))),
        mse=float(np.mean((x - actual) ** 2)),
    )


def relative_efficiency(mse_ref: float, mse_new: float) -> float:
    """``mse_ref / mse_new``; infinite when the new estimator's mse is 0."""
    if mse_new == 0:
        return INF
    return mse_ref / mse_new


def relative_bias(bias_other: float, bias_new: float, tol: float = 1e-12) -> float:
    if abs(bias_new) < tol:
        return INF
    return abs(bias_other) / abs(bias_new)


@dataclass(frozen=True)
class CoverageRow:
    actual: float
    halfwidth: float
    coverage: float
    n: int


def coverage_table(lower, upper, actual: float) -> CoverageRow:
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.size == 0:
        raise ValueError("no intervals")
    hit = (lo <= actual) & (actual <= hi)
    return CoverageRow(float(actual), float(np.mean((hi - lo) / 2)), float(np.mean(hit)), int(lo.size))


def augment_complements(variables: dict, prefix: str = "not_") -> dict:
    """Add ``1 - y`` for every binary variable."""
    out = dict(variables)
    for name, y in variables.items():
        y = np.asarray(y, dtype=float)
        if not np.all((y == 0) | (y == 1)):
            raise ValueError(f"variable {name!r} is not binary")
        out[_complement_name(name, prefix)] = 1.0 - y
    return out


def _complement_name(name, prefix):
    return name[len(prefix):] if name.startswith(prefix) else prefix + name


def complement_points(points):
    """Each ``(p, mse)`` point plus its complement ``(1 - p, mse)``.

    The estimate of a complement proportion is one minus the estimate of
    the proportion, so its mse is the same.
    """
    points = [(float(p), float(m)) for p, m in points]
    return points + [(1.0 - p, m) for p, m in points]


def fit_parabola(points) -> float:
    """Height ``a`` of ``mse = a p (1 - p)`` by the ratio estimator."""
    p = np.asarray([q for q, _ in points], dtype=float)
    mse = np.asarray([m for _, m in points], dtype=float)
    if p.size == 0 or np.all((p == 0) | (p == 1)):
        raise ValueError("need at least one point with 0 < p < 1")
    return math.fsum(mse.tolist()) / math.fsum((p * (1 - p)).tolist())

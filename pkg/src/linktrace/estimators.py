"""Point estimates, variance estimates and normal intervals.

Weighted means are computed as the correctly rounded value of the exact
ratio of the (dyadic-rational) weighted sums, so the result does not depend
on summation order, and for a binary variable the estimates for ``y`` and
``1 - y`` add to exactly 1.
"""

from __future__ import annotations

import csv
import enum
import logging
import warnings
from dataclasses import asdict, dataclass
from fractions import Fraction
from statistics import NormalDist

import numpy as np

from .resampler import ZeroFrequencyError

log = logging.getLogger(__name__)


class VarianceVariant(str, enum.Enum):
    V1 = "V1"
    V2 = "V2"
    JOINT_FULL = "JOINT_FULL"
    JOINT_EDGES = "JOINT_EDGES"
    DIAGONAL = "DIAGONAL"


class NegativeVarianceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EstimateResult:
    variable: str
    estimator: str
    variant: str
    point: float
    variance: float
    alpha: float
    lower: float
    upper: float
    clamped: bool = False

    @property
    def halfwidth(self) -> float:
        return (self.upper - self.lower) / 2

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


RESULT_FIELDS = ("variable", "estimator", "variant", "point", "variance", "lower", "upper", "alpha")


def _exact_sum(terms) -> Fraction:
    # terms: (numerator, power-of-two denominator) pairs
    terms = list(terms)
    if not terms:
        return Fraction(0)
    den = max(b for _, b in terms)
    return Fraction(sum(a * (den // b) for a, b in terms), den)


def _ratio_of_sums(y, w) -> float:
    """Correctly rounded ``sum(y * w) / sum(w)`` with no intermediate rounding."""
    wr = [x.as_integer_ratio() for x in w.tolist()]
    yr = [x.as_integer_ratio() for x in y.tolist()]
    num = _exact_sum((a1 * a2, b1 * b2) for (a1, b1), (a2, b2) in zip(yr, wr))
    den = _exact_sum(wr)
    if den == 0:
        raise ZeroDivisionError("weights sum to zero")
    return float(num / den)


def _aligned(y, w, what):
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.shape != w.shape or y.ndim != 1:
        raise ValueError(f"values and {what} must be 1-d arrays of the same length")
    if len(y) == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(y)):
        raise ValueError("values must be finite")
    return y, w


def _require_positive(w, what, ids=None):
    bad = np.flatnonzero(~(w > 0))
    if len(bad):
        nodes = bad if ids is None else np.asarray(ids)[bad]
        if what == "d":
            raise ValueError(f"nonpositive degree for node(s) {nodes[:10].tolist()}; no degree weight")
        raise ZeroFrequencyError(nodes, what)


def estimate_mean_f(y, f, ids=None) -> float:
    """Weighted mean ``sum(y/f) / sum(1/f)`` using inclusion frequencies."""
    y, f = _aligned(y, f, "f")
    _require_positive(f, "f", ids)
    return _ratio_of_sums(y, 1.0 / f)


def estimate_mean_vh(y, d, ids=None) -> float:
    """Degree-weighted (Volz-Heckathorn) mean ``sum(y/d) / sum(1/d)``."""
    y, d = _aligned(y, d, "degrees")
    _require_positive(d, "d", ids)
    return _ratio_of_sums(y, 1.0 / d)


def sample_mean(y) -> float:
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("empty sample")
    return _ratio_of_sums(y, np.ones_like(y))


def variance_v2(y, f, mu) -> float:
    """Sample variance of ``t_i = n (y_i/f_i) / sum(1/f)`` divided by n."""
    y, f = _aligned(y, f, "f")
    _require_positive(f, "f")
    n = len(y)
    if n < 2:
        raise ValueError("variance needs at least 2 observations")
    w = 1.0 / f
    t = n * (y * w) / w.sum()
    return float(np.sum((t - mu) ** 2) / (n * (n - 1)))


def variance_v1(y, f, mu) -> float:
    """Linearization-based ``sum((y-mu)^2/f^2) / (sum 1/f)^2``."""
    y, f = _aligned(y, f, "f")
    _require_positive(f, "f")
    w = 1.0 / f
    return float(np.sum(((y - mu) * w) ** 2) / w.sum() ** 2)


def variance_joint(
    y,
    f,
    pairs,
    fij,
    mu,
    variant=VarianceVariant.JOINT_FULL,
    edges=None,
    diagonal="linearized",
    coefficients=True,
) -> float:
    """Variance from joint inclusion frequencies.

    ``pairs`` is an ``(m, 2)`` array of sample positions with joint
    frequencies ``fij``. JOINT_FULL uses every given pair, JOINT_EDGES only
    the pairs in ``edges`` (the sample edge set), DIAGONAL none. Each
    unordered pair enters the double sum twice. The diagonal term is
    ``(1 - f_i)(y_i - mu)^2 / f_i^2`` (``diagonal="linearized"``) or
    ``(f_i - 1)(y_i - mu)^2 / f_i`` (``diagonal="printed"``);
    ``coefficients=False`` drops the ``(1 - f_i)`` factor. The result may
    be negative.
    """
    variant = VarianceVariant(variant)
    y, f = _aligned(y, f, "f")
    _require_positive(f, "f")
    if np.any(f > 1):
        raise ValueError("inclusion frequencies must be <= 1 for the joint variance")
    w = 1.0 / f
    u = (y - mu) * w
    if diagonal == "linearized":
        coef = (1.0 - f) if coefficients else np.ones_like(f)
        total = float(np.sum(coef * u * u))
    elif diagonal == "printed":
        coef = (f - 1.0) if coefficients else np.ones_like(f)
        total = float(np.sum(coef * (y - mu) ** 2 * w))
    else:
        raise ValueError("diagonal must be 'linearized' or 'printed'")

    if variant in (VarianceVariant.JOINT_FULL, VarianceVariant.JOINT_EDGES):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        fij = np.asarray(fij, dtype=float)
        if variant is VarianceVariant.JOINT_EDGES:
            if edges is None:
                raise ValueError("JOINT_EDGES needs the sample edge set")
            lookup = {(min(a, b), max(a, b)): k for k, (a, b) in enumerate(pairs.tolist())}
            sel = []
            for a, b in np.asarray(edges, dtype=np.int64).reshape(-1, 2).tolist():
                key = (min(a, b), max(a, b))
                if key not in lookup:
                    raise KeyError(f"no joint frequency for pair {key}")
                sel.append(lookup[key])
            idx = np.asarray(sorted(set(sel)), dtype=np.int64)
            pairs, fij = pairs[idx], fij[idx]
        elif len(pairs) == 0 and len(y) > 1:
            raise KeyError("JOINT_FULL needs joint frequencies; none were accumulated")
        zero = np.flatnonzero(fij <= 0)
        if len(zero):
            a, b = pairs[zero[0]]
            raise ValueError(f"joint frequency is zero for pair ({a}, {b})")
        i, j = pairs[:, 0], pairs[:, 1]
        delta = (fij - f[i] * f[j]) / fij
        total += 2.0 * float(np.sum(delta * u[i] * u[j]))
    elif variant is not VarianceVariant.DIAGONAL:
        raise ValueError(f"{variant.value} is not a joint-frequency variant")
    return total / w.sum() ** 2


def z_quantile(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    return NormalDist().inv_cdf(1.0 - alpha / 2.0)


def confidence_interval(mu: float, variance: float, alpha: float = 0.05) -> tuple[float, float]:
    if not variance >= 0:
        raise ValueError(f"variance must be nonnegative, got {variance}")
    h = z_quantile(alpha) * float(np.sqrt(variance))
    return mu - h, mu + h


def estimate_ratio(y, x, f) -> tuple[float, float]:
    """Ratio of means ``sum(y/f) / sum(x/f)`` and its linearized variance."""
    y, f = _aligned(y, f, "f")
    x = np.asarray(x, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    _require_positive(f, "f")
    w = 1.0 / f
    yr = _exact_sum(v.as_integer_ratio() for v in (y * w).tolist())
    xr = _exact_sum(v.as_integer_ratio() for v in (x * w).tolist())
    if xr == 0:
        raise ZeroDivisionError("sum of x/f is zero")
    r = float(yr / xr)
    var = float(np.sum(((y - x * r) * w) ** 2) / np.sum(x * w) ** 2)
    return r, var


def estimate_mean_wr(y, m, g) -> tuple[float, float]:
    """Mean under a with-replacement design.

    ``m`` are selection counts in the real design and ``g`` the mean
    selection counts in the with-replacement resampling process.
    """
    y, g = _aligned(y, g, "g")
    m = np.asarray(m, dtype=float)
    if m.shape != y.shape:
        raise ValueError("m and y must have the same length")
    if np.any(m < 1):
        raise ValueError("selection counts m_i must be >= 1")
    _require_positive(g, "g")
    w = m / g
    mu = _ratio_of_sums(y, w)
    var = float(np.sum(m * (y - mu) ** 2 / g**2) / w.sum() ** 2)
    return mu, var


def _variance(variant, y, weights, mu, joint):
    if variant is VarianceVariant.V1:
        return variance_v1(y, weights, mu)
    if variant is VarianceVariant.V2:
        return variance_v2(y, weights, mu)
    if joint is None:
        raise ValueError(f"{variant.value} needs joint inclusion frequencies")
    return variance_joint(y, weights, mu=mu, variant=variant, **joint)


def estimate(
    y,
    weights,
    *,
    variable: str = "y",
    estimator: str = "new",
    variant=VarianceVariant.V2,
    alpha: float = 0.05,
    joint: dict | None = None,
) -> EstimateResult:
    """Point estimate, variance and interval in one record.

    ``weights`` are the inclusion frequencies for ``estimator="new"``, the
    degrees for ``"current"``, and ignored for ``"mean"``. ``joint`` holds
    the keyword arguments for :func:`variance_joint` (``pairs``, ``fij``
    and, for JOINT_EDGES, ``edges``).
    """
    variant = VarianceVariant(variant)
    y = np.asarray(y, dtype=float)
    if estimator == "new":
        mu = estimate_mean_f(y, weights)
    elif estimator == "current":
        mu = estimate_mean_vh(y, weights)
    elif estimator == "mean":
        weights = np.ones_like(y)
        mu = sample_mean(y)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    var = _variance(variant, y, np.asarray(weights, dtype=float), mu, joint)
    clamped = False
    if var < 0:
        warnings.warn(
            f"{variable}: negative {variant.value} variance {var:.3g} clamped to 0",
            NegativeVarianceWarning,
            stacklevel=2,
        )
        var, clamped = 0.0, True
    lo, hi = confidence_interval(mu, var, alpha)
    return EstimateResult(variable, estimator, variant.value, mu, var, alpha, lo, hi, clamped)


def write_results(results, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in results:
            row = asdict(r)
            w.writerow([row[k] if isinstance(row[k], str) else repr(float(row[k])) for k in RESULT_FIELDS])

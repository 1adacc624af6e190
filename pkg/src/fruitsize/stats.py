"""Box-plot statistics of signed size errors."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import EmptyMaskError


@dataclass(frozen=True)
class QuartileSummary:
    q1: float
    q2: float
    q3: float
    whisker_low: float
    whisker_high: float
    n_outliers: int
    n_total: int

    @property
    def iqr(self):
        return self.q3 - self.q1

    def to_dict(self):
        return asdict(self)


def quantile_linear(sorted_values, p):
    """Quantile by linear interpolation between closest ranks
    (position ``p * (n - 1)`` in the sorted list)."""
    n = len(sorted_values)
    h = p * (n - 1)
    lo = math.floor(h)
    hi = min(lo + 1, n - 1)
    frac = h - lo
    a, b = sorted_values[lo], sorted_values[hi]
    return a + (b - a) * frac


def quartile_summary(errors):
    """Quartiles plus whiskers ``Q1 - 1.5 IQR`` and ``Q3 + 1.5 IQR``.

    Values strictly outside the whiskers are counted as outliers; none
    are discarded.
    """
    values = sorted(float(e) for e in errors)
    if not values:
        raise EmptyMaskError("no errors to summarise")
    q1, q2, q3 = (quantile_linear(values, p) for p in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    n_out = sum(1 for v in values if v < lo or v > hi)
    return QuartileSummary(q1, q2, q3, lo, hi, n_out, len(values))

"""Percentile depth outlier removal over a fruit's masked pixels."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMaskError, InvalidInputError


@dataclass(frozen=True, order=True)
class RetentionRange:
    """Band of depth ranks to keep, as fractions of the pixel count."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (0.0 <= self.lower < self.upper <= 1.0):
            raise InvalidInputError(
                f"retention range needs 0 <= lower < upper <= 1, got {self.lower}:{self.upper}"
            )

    @classmethod
    def parse(cls, text):
        """Parse ``"10:90"`` (percent) into ``RetentionRange(0.10, 0.90)``."""
        try:
            lo, hi = text.split(":")
            return cls(float(lo) / 100.0, float(hi) / 100.0)
        except ValueError as exc:
            if isinstance(exc, InvalidInputError):
                raise
            raise InvalidInputError(f"bad retention range {text!r}; expected LO:HI in percent") from exc

    @property
    def label(self):
        return f"{round(self.lower * 100)}:{round(self.upper * 100)}"


# 0-100 down to 40-60 in 5% steps
DEFAULT_RETENTION_GRID = tuple(RetentionRange(k / 100.0, (100 - k) / 100.0) for k in range(0, 45, 5))


def _rank_bounds(n, rng):
    # 1-based nearest-rank bounds; epsilon absorbs products like 0.35*20 = 7.000000000000001
    lo = max(1, math.ceil(rng.lower * n - 1e-9))
    hi = min(n, math.floor(rng.upper * n + 1e-9))
    return lo, hi


def depth_rank_mask(z, rng):
    """Boolean keep-mask over ``z`` for the retention range ``rng``."""
    z = np.asarray(z, dtype=np.float64)
    n = len(z)
    if n == 0:
        raise EmptyMaskError("no depth pixels to filter")
    lo, hi = _rank_bounds(n, rng)
    order = np.argsort(z, kind="stable")
    keep = np.zeros(n, dtype=bool)
    if lo <= hi:
        keep[order[lo - 1:hi]] = True
    # the (lower) median rank always survives, which keeps the filter monotone
    keep[order[(n + 1) // 2 - 1]] = True
    return keep


def filter_by_depth_percentile(pixels, rng):
    """Keep the pixels whose depth rank lies within ``rng``.

    Nearest-rank semantics: after a stable ascending sort on z, sorted
    position ``i`` (0-based) survives when
    ``ceil(lower*N) <= i+1 <= floor(upper*N)``. The median-rank pixel is
    kept regardless, so the result is never empty. Input order is preserved.
    """
    pix = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    if len(pix) == 0:
        raise EmptyMaskError("no depth pixels to filter")
    return pix[depth_rank_mask(pix[:, 2], rng)]


def mean_depth(pixels):
    pix = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    if len(pix) == 0:
        raise EmptyMaskError("cannot average an empty pixel set")
    return float(np.mean(pix[:, 2]))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fruitsize.errors import EmptyMaskError
from fruitsize.stats import quartile_summary


def test_one_to_five():
    s = quartile_summary([1, 2, 3, 4, 5])
    assert (s.q1, s.q2, s.q3, s.whisker_low, s.whisker_high, s.n_outliers, s.n_total) == (2, 3, 4, -1, 7, 0, 5)


def test_constant():
    s = quartile_summary([5, 5, 5])
    assert (s.q1, s.q2, s.q3, s.whisker_low, s.whisker_high, s.n_outliers) == (5, 5, 5, 5, 5, 0)


def test_single_outlier():
    s = quartile_summary([0, 0, 0, 0, 100])
    assert s.whisker_high == 0 and s.n_outliers == 1


def test_interpolated_quartiles():
    s = quartile_summary([4, 1, 3, 2])  # positions .75, 1.5, 2.25 in the sorted list
    assert (s.q1, s.q2, s.q3) == (1.75, 2.5, 3.25)
    assert s.whisker_low == 1.75 - 1.5 * 1.5 and s.whisker_high == 3.25 + 1.5 * 1.5


def test_empty():
    with pytest.raises(EmptyMaskError):
        quartile_summary([])


values = st.lists(st.floats(-200, 200, allow_nan=False), min_size=1, max_size=60)


@settings(max_examples=300, deadline=None)
@given(values)
def test_matches_numpy_linear(v):
    s = quartile_summary(v)
    q = np.percentile(v, [25, 50, 75], method="linear")
    assert (s.q1, s.q2, s.q3) == pytest.approx(tuple(q), abs=1e-9)
    assert s.q1 <= s.q2 <= s.q3
    assert s.whisker_high == s.q3 + 1.5 * (s.q3 - s.q1)
    assert s.whisker_low == s.q1 - 1.5 * (s.q3 - s.q1)
    assert s.n_outliers == sum(x < s.whisker_low or x > s.whisker_high for x in v)


@settings(max_examples=300, deadline=None)
@given(values, st.randoms(use_true_random=False), st.floats(-50, 50))
def test_permutation_and_shift(v, shuffler, c):
    base = quartile_summary(v)
    w = list(v)
    shuffler.shuffle(w)
    assert quartile_summary(w) == base
    moved = quartile_summary([x + c for x in v])
    for name in ("q1", "q2", "q3", "whisker_low", "whisker_high"):
        assert getattr(moved, name) == pytest.approx(getattr(base, name) + c, abs=1e-9)

"""Tests for seeded streams and the ordered thread map."""
import time

import numpy as np
import pytest

from utils.parallel import ordered_map
from utils.rng import label_key, seeded_rng


def test_same_key_same_stream():
    np.testing.assert_array_equal(seeded_rng(7, "noise", 3).normal(size=5), seeded_rng(7, "noise", 3).normal(size=5))


@pytest.mark.parametrize(
    "other",
    [(8, "noise", 3), (7, "levels", 3), (7, "noise", 4), (7, "noise")],
)
def test_any_key_change_gives_a_new_stream(other):
    base = seeded_rng(7, "noise", 3).normal(size=5)
    assert not np.array_equal(base, seeded_rng(*other).normal(size=5))


def test_first_thousand_variates_repeat():
    np.testing.assert_array_equal(seeded_rng(3, "levels").random(1000), seeded_rng(3, "levels").random(1000))


def test_uniform_mean():
    assert abs(seeded_rng(0, "uniform").random(10 ** 6).mean() - 0.5) < 0.002


def test_normal_variance():
    assert seeded_rng(0, "normal").standard_normal(10 ** 6).var() == pytest.approx(1.0, rel=0.01)


def test_label_key_is_stable_64_bit():
    assert label_key("bootstrap") == label_key("bootstrap")
    assert 0 <= label_key("bootstrap") < 2 ** 64


def test_negative_seed():
    with pytest.raises(ValueError):
        seeded_rng(-1, "noise")


def test_ordered_map_keeps_input_order():
    def slow_square(i):
        time.sleep(0.001 * (10 - i))
        return i * i

    assert ordered_map(slow_square, range(10), threads=4) == [i * i for i in range(10)]
    assert ordered_map(slow_square, [], threads=4) == []

import math

import pytest

from components.angles import (
    circle_distance, growth_probe, min_multiple, reduce_angle, verify_min_multiple,
)
from components.errors import NotFound, PreconditionError

MAGIC_THETA = 2 * math.atan(1 / 3)


def naive_min_multiple(theta, target, delta, m_max):
    for m in range(1, m_max + 1):
        if circle_distance(math.fmod(m * theta, 2 * math.pi), target) <= delta:
            return m
    return None


def test_reduce_angle_and_circle_distance():
    assert reduce_angle(1, 7.0) == pytest.approx(7.0 - 2 * math.pi)
    assert 0.0 <= reduce_angle(10 ** 9, MAGIC_THETA) < 2 * math.pi
    assert circle_distance(0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)
    assert circle_distance(1.0, 1.0) == 0.0


@pytest.mark.parametrize("theta, target, delta", [
    (MAGIC_THETA, math.pi / 4, 0.01),
    (MAGIC_THETA, math.pi / 8, 0.05),
    (1.0, 3.0, 0.01),
])
def test_min_multiple_matches_naive_scan(theta, target, delta):
    m = min_multiple(theta, target, delta)
    assert m == naive_min_multiple(theta, target, delta, m)
    assert verify_min_multiple(theta, target, delta, m)


def test_min_multiple_of_rational_angle_is_not_found():
    with pytest.raises(NotFound):
        min_multiple(math.pi / 2, math.pi / 3, 0.1, 10_000)


def test_min_multiple_rejects_bad_delta():
    with pytest.raises(PreconditionError):
        min_multiple(MAGIC_THETA, 0.0, 0.0)


def test_verify_rejects_a_multiple_that_misses():
    m = min_multiple(MAGIC_THETA, math.pi / 4, 0.01)
    assert m > 1
    assert not verify_min_multiple(MAGIC_THETA, math.pi / 4, 0.01, m - 1)


def test_growth_probe_is_monotone():
    table = growth_probe(MAGIC_THETA, math.pi / 4, [0.1, 0.03, 0.01, 0.003])
    assert list(table.columns) == ["delta", "m"]
    values = table["m"].tolist()
    assert values == sorted(values)


def test_growth_probe_keeps_unfound_rows_empty():
    table = growth_probe(MAGIC_THETA, math.pi / 4, [0.5, 1e-6], m_max=50)
    assert table["m"].isna().tolist() == [False, True]

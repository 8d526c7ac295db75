"""
Smallest integer multiple of a rotation angle that lands within delta of a target on the circle.

Reduction of m * theta mod 2pi is done in extended precision (mpmath) so that the scan stays
exact to about 1e-15 for m up to 1e9; the scan itself runs in float chunks, each chunk starting
from a freshly reduced base angle.
"""
import logging
import math
from typing import Iterable, Optional

import numpy as np
import pandas as pd
from mpmath import mp

from components.errors import NotFound, PreconditionError

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
DEFAULT_M_MAX = 10 ** 7
SCAN_CHUNK = 1 << 16
# Float accumulation error allowed inside one chunk before the exact recheck
SCAN_SLACK = 1e-9


def reduce_angle(m: int, theta: float) -> float:
    """
    m * theta reduced to [0, 2pi) with 40 significant digits of working precision
    """
    with mp.workdps(40):
        x = mp.mpf(theta) * m
        two_pi = 2 * mp.pi
        reduced = x - two_pi * mp.floor(x / two_pi)
        value = float(reduced)
    return 0.0 if value >= TWO_PI else value


def circle_distance(a: float, b: float) -> float:
    diff = abs(a - b) % TWO_PI
    return min(diff, TWO_PI - diff)


def _check_inputs(theta: float, target: float, delta: float):
    if not (math.isfinite(theta) and math.isfinite(target)):
        raise PreconditionError("Angles must be finite")
    if delta <= 0:
        raise PreconditionError(f"delta must be positive, got {delta}")


def min_multiple(theta: float, target: float, delta: float, m_max: int = DEFAULT_M_MAX) -> int:
    """
    Smallest m in [1, m_max] with circle-distance(m theta, target) <= delta.

    Raises NotFound when no such m exists in range.
    """
    _check_inputs(theta, target, delta)
    target = target % TWO_PI
    step = reduce_angle(1, theta)
    start = 1
    while start <= m_max:
        count = min(SCAN_CHUNK, m_max - start + 1)
        base = reduce_angle(start, theta)
        offsets = np.arange(count, dtype=np.float64)
        angles = np.mod(base + offsets * step, TWO_PI)
        diff = np.abs(angles - target)
        distances = np.minimum(diff, TWO_PI - diff)
        for k in np.flatnonzero(distances <= delta + SCAN_SLACK):
            m = start + int(k)
            # Confirm with an independent exact reduction
            if circle_distance(reduce_angle(m, theta), target) <= delta:
                logger.debug("min_multiple(theta=%r, target=%r, delta=%r) = %d", theta, target, delta, m)
                return m
        start += count
    raise NotFound(f"No multiple of {theta!r} within {delta!r} of {target!r} for m <= {m_max}")


def verify_min_multiple(theta: float, target: float, delta: float, m: int) -> bool:
    """
    Full rescan below m plus the postcondition at m, all with exact reduction
    """
    target = target % TWO_PI
    if circle_distance(reduce_angle(m, theta), target) > delta:
        return False
    return all(circle_distance(reduce_angle(k, theta), target) > delta for k in range(1, m))


def growth_probe(theta: float, target: float, deltas: Iterable[float],
                 m_max: int = DEFAULT_M_MAX) -> pd.DataFrame:
    """
    Table of (delta, m(delta)) for plotting log m against log 1/delta.

    Rows whose search runs past m_max keep an empty m.
    """
    rows = []
    for delta in deltas:
        m: Optional[int]
        try:
            m = min_multiple(theta, target, delta, m_max)
        except NotFound:
            logger.info("growth_probe: no multiple within %r below %d", delta, m_max)
            m = None
        rows.append({"delta": float(delta), "m": m})
    table = pd.DataFrame(rows, columns=["delta", "m"])
    table["m"] = table["m"].astype("Int64")
    return table

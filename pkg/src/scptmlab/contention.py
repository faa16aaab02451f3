"""Preamble-occupancy combinatorics for the contention stage.

The number of distinct preambles chosen when a devices pick uniformly from a
pool of C is a classic occupancy problem; the distribution is evaluated by
inclusion-exclusion and clamped against floating-point cancellation.
"""

from __future__ import annotations

import math

import numpy as np


class ContendersZero(ValueError):
    """Occupancy quantities are undefined for zero contenders."""


def round_half_away(x: float) -> float:
    """Rounding convention for all bracketed expressions: half away from zero."""
    return math.copysign(math.floor(abs(x) + 0.5), x)


def occupancy_distribution(contenders: float, pool: int) -> np.ndarray:
    """Probability of exactly c distinct preambles in use, c = 1..min(C, a).

    ``contenders`` may be fractional (expected-value mass); the closed form
    extends continuously through the exponent.
    """
    if contenders < 1:
        raise ContendersZero("occupancy distribution needs contenders >= 1")
    if pool < 1:
        raise ValueError("preamble pool must be >= 1")
    c_max = max(1, min(pool, int(math.ceil(contenders))))
    q = np.zeros(c_max)
    for c in range(1, c_max + 1):
        terms = [
            (-1.0) ** j * math.comb(c, j)
            * (1.0 - (pool - c + j) / pool) ** contenders
            for j in range(c + 1)
        ]
        q[c - 1] = math.comb(pool, pool - c) * math.fsum(terms)
    return np.clip(q, 0.0, 1.0)


def expected_used_preambles(contenders: float, pool: int,
                            rounded: bool = True) -> float:
    """Expected number of distinct preambles in use, normalized and rounded.

    The raw distribution is renormalized over its support before taking the
    mean (its numerical sum can fall short of 1 for contenders < pool);
    ``rounded=False`` returns the pre-rounding mean for oracle comparisons.
    """
    if contenders < 1:
        raise ContendersZero("expected_used_preambles needs contenders >= 1")
    q = occupancy_distribution(contenders, pool)
    total = q.sum()
    if total <= 0.0:
        return 1.0
    mean = float(np.arange(1, q.size + 1) @ q) / total
    return round_half_away(mean) if rounded else mean


def singleton_probability(contenders: float, pool: int) -> float:
    """Probability that a contender picked a preamble no one else picked."""
    if contenders < 1:
        raise ContendersZero("singleton_probability needs contenders >= 1")
    return min(1.0, (1.0 - 1.0 / pool) ** (contenders - 1.0))

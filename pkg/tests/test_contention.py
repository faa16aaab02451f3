"""Oracles for the preamble-occupancy combinatorics.

The closed-form occupancy distribution is checked against brute-force
enumeration of every preamble-choice tuple for small pools, and against a
large direct Monte Carlo sample for a realistic pool size.
"""

import itertools
import math

import numpy as np
import pytest

from scptmlab import (ContendersZero, expected_used_preambles,
                      occupancy_distribution, round_half_away,
                      singleton_probability)


def enumerated_distribution(contenders: int, pool: int) -> np.ndarray:
    """Exact distribution of distinct choices by exhaustive enumeration."""
    counts = np.zeros(min(pool, contenders))
    for tup in itertools.product(range(pool), repeat=contenders):
        counts[len(set(tup)) - 1] += 1
    return counts / pool**contenders


@pytest.mark.parametrize("pool", [1, 2, 3, 4])
@pytest.mark.parametrize("contenders", [1, 2, 3, 4])
def test_distribution_matches_enumeration(contenders, pool):
    got = occupancy_distribution(contenders, pool)
    want = enumerated_distribution(contenders, pool)
    assert got.size == want.size
    np.testing.assert_allclose(got, want, rtol=0.0, atol=1e-12)


def test_distribution_sums_to_one_for_integer_contenders():
    for contenders in (1, 5, 20, 54, 200):
        q = occupancy_distribution(contenders, 54)
        # Inclusion-exclusion cancellation limits the raw sum's accuracy
        # near contenders == pool; the mean is renormalized downstream.
        assert abs(q.sum() - 1.0) < 1e-4


def test_two_contenders_two_preambles():
    # Collision with probability 1/2 -> E[distinct] = 1.5, rounds to 2.
    q = occupancy_distribution(2, 2)
    np.testing.assert_allclose(q, [0.5, 0.5], atol=1e-15)
    assert expected_used_preambles(2, 2, rounded=False) == pytest.approx(1.5)
    assert expected_used_preambles(2, 2) == 2.0


@pytest.mark.parametrize("contenders", [2, 8, 54, 200])
def test_mean_matches_large_sample(contenders):
    pool = 54
    rng = np.random.default_rng(20260826 + contenders)
    n_samples = 1_000_000
    total = 0.0
    total_sq = 0.0
    chunk = 100_000
    for _ in range(n_samples // chunk):
        picks = rng.integers(0, pool, size=(chunk, contenders))
        distinct = (
            np.diff(np.sort(picks, axis=1), axis=1) != 0
        ).sum(axis=1) + 1
        total += float(distinct.sum())
        total_sq += float((distinct.astype(np.float64) ** 2).sum())
    sample_mean = total / n_samples
    sample_var = total_sq / n_samples - sample_mean**2
    se = math.sqrt(max(sample_var, 1e-30) / n_samples)
    mean = expected_used_preambles(contenders, pool, rounded=False)
    assert abs(mean - sample_mean) <= 3.0 * max(se, 1e-12)


def test_singleton_probability_formula():
    assert singleton_probability(1, 54) == 1.0
    assert singleton_probability(2, 2) == pytest.approx(0.5)
    assert singleton_probability(3, 4) == pytest.approx(0.75**2)
    # Fractional contender mass extends the exponent continuously.
    assert singleton_probability(2.5, 54) == pytest.approx((53 / 54) ** 1.5)


def test_zero_contenders_rejected():
    for fn in (occupancy_distribution, expected_used_preambles,
               singleton_probability):
        with pytest.raises(ContendersZero):
            fn(0.5, 54)


def test_round_half_away():
    assert round_half_away(0.5) == 1.0
    assert round_half_away(1.5) == 2.0
    assert round_half_away(2.4) == 2.0
    assert round_half_away(-0.5) == -1.0
    assert round_half_away(-1.5) == -2.0
    assert round_half_away(0.0) == 0.0

"""Metric definitions: hand oracles, internal identities, and the
expectation-of-rounded-mean helper."""

import math

import numpy as np
import pytest

from scptmlab import round_half_away
from scptmlab.metrics import _expected_rounded_mean


def test_single_device_oracles(fluid_report, mc_report):
    # One device, no contention: access takes the 3-VF handshake (15 ms) and
    # the energy is two 1-ms transmissions at 500 mW plus two 1-ms receptions
    # at 80 mW = 1.16 mJ. Both engines must agree exactly.
    for rep in (fluid_report(scheme="NeGP", num_devices=1),
                mc_report(scheme="NeGP", num_devices=1)):
        assert rep.access_success_prob == 1.0
        assert rep.avg_access_delay_ms == pytest.approx(15.0)
        assert rep.avg_access_energy_mj == pytest.approx(1.16)


@pytest.mark.parametrize("scheme,n", [("SP", 200), ("GP", 200),
                                      ("eGP", 200), ("NeGP", 200)])
def test_total_delay_identity(fluid_report, scheme, n):
    rep = fluid_report(scheme=scheme, num_devices=n)
    assert rep.avg_total_delay_ms == pytest.approx(
        rep.avg_access_delay_ms + rep.avg_idle_delay_ms + rep.avg_tx_delay_ms)


@pytest.mark.parametrize("scheme", ["SP", "GP", "eGP", "NeGP"])
def test_bounds_and_orderings(fluid_report, mc_report, scheme):
    for rep in (fluid_report(scheme=scheme, num_devices=300),
                mc_report(scheme=scheme, num_devices=300)):
        assert 0.0 <= rep.access_success_prob <= 1.0
        assert rep.avg_total_energy_mj >= rep.avg_access_energy_mj
        assert 0.0 <= rep.ul_utilization <= 1.0
        assert 0.0 <= rep.dl_utilization <= 1.0
        assert rep.avg_access_delay_ms >= 0.0
        assert rep.avg_idle_delay_ms >= 0.0
        assert rep.avg_tx_delay_ms > 0.0
        assert rep.service_delay_ms > 0.0
        assert rep.num_transmissions >= 1


def test_csv_row_round_trips(fluid_report):
    rep = fluid_report(scheme="NeGP", num_devices=100)
    row = rep.csv_row().split(",")
    assert row[0] == "analytic"
    assert float(row[1]) == pytest.approx(rep.access_success_prob)
    assert float(row[5]) == pytest.approx(rep.avg_total_delay_ms)


def test_expected_rounded_mean_degenerate():
    # A point mass on an integer value is its own expectation for any n.
    assert _expected_rounded_mean(np.array([3.0]), np.array([1.0]), 1) == 3.0
    assert _expected_rounded_mean(np.array([3.0]), np.array([1.0]), 7) == 3.0
    # With a single draw the estimator is just the rounded value, so the
    # expectation is the pmf-weighted mean of the values themselves.
    got = _expected_rounded_mean(np.array([2.0, 9.0]),
                                 np.array([0.25, 0.75]), 1)
    assert got == pytest.approx(0.25 * 2.0 + 0.75 * 9.0)


def test_expected_rounded_mean_matches_brute_force():
    # n=2 draws from {1: .5, 4: .5}: sample means 1, 2.5, 4 with probs
    # .25/.5/.25; rounded (half away) -> 1, 3, 4 -> expectation 2.75.
    got = _expected_rounded_mean(np.array([1.0, 4.0]),
                                 np.array([0.5, 0.5]), 2)
    assert got == pytest.approx(2.75)


def test_expected_rounded_mean_matches_simulation_on_normal_path():
    # Force the normal-approximation branch with a large n and compare to a
    # direct simulation of the rounded-mean estimator.
    values = np.array([2.0, 7.0, 11.0])
    pmf = np.array([0.5, 0.3, 0.2])
    n = 200
    got = _expected_rounded_mean(values, pmf, n)
    rng = np.random.default_rng(99)
    draws = rng.choice(values, size=(200_000, n), p=pmf)
    sim = np.vectorize(round_half_away)(draws.mean(axis=1)).mean()
    assert got == pytest.approx(sim, abs=0.01)


def test_expected_rounded_mean_exact_path_matches_simulation():
    values = np.array([1.0, 2.0, 5.0])
    pmf = np.array([0.2, 0.5, 0.3])
    n = 9
    got = _expected_rounded_mean(values, pmf, n)
    rng = np.random.default_rng(5)
    draws = rng.choice(values, size=(400_000, n), p=pmf)
    sim = np.vectorize(round_half_away)(draws.mean(axis=1)).mean()
    assert got == pytest.approx(sim, abs=0.01)

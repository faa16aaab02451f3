"""The metric set computed from a finished trace and its multicast schedule.

All means over paging subgroups skip subgroups with no devices or no
completions (reported as NaN per subgroup). Energies are millijoules
(mW x ms / 1000); delays are milliseconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .config import DerivedQuantities, ScenarioConfig
from .contention import round_half_away
from .paging import PagingPlan
from .scheduler import PtmSchedule
from .trace import EmptyTrace, ProtocolTrace

METRIC_COLUMNS = (
    "p_access", "d_access_ms", "d_idle_ms", "d_tx_ms", "d_total_ms",
    "d_service_ms", "e_access_mj", "e_total_mj", "r_ul", "r_dl",
)


@dataclass
class MetricsReport:
    provenance: str
    access_success_prob: float
    avg_access_delay_ms: float
    avg_idle_delay_ms: float
    avg_tx_delay_ms: float
    avg_total_delay_ms: float
    service_delay_ms: float
    avg_access_energy_mj: float
    avg_total_energy_mj: float
    ul_utilization: float
    dl_utilization: float
    r2_per_subgroup: np.ndarray
    r3_per_subgroup: np.ndarray
    horizon_vfs: int
    num_transmissions: int

    def values(self) -> dict[str, float]:
        return {
            "p_access": self.access_success_prob,
            "d_access_ms": self.avg_access_delay_ms,
            "d_idle_ms": self.avg_idle_delay_ms,
            "d_tx_ms": self.avg_tx_delay_ms,
            "d_total_ms": self.avg_total_delay_ms,
            "d_service_ms": self.service_delay_ms,
            "e_access_mj": self.avg_access_energy_mj,
            "e_total_mj": self.avg_total_energy_mj,
            "r_ul": self.ul_utilization,
            "r_dl": self.dl_utilization,
        }

    def csv_row(self) -> str:
        vals = self.values()
        cells = [self.provenance] + [f"{vals[c]:.10g}" for c in METRIC_COLUMNS]
        return ",".join(cells)

    @staticmethod
    def csv_header() -> str:
        return ",".join(("provenance",) + METRIC_COLUMNS)

    def to_json(self) -> str:
        payload = {"provenance": self.provenance, **self.values(),
                   "r2_per_subgroup": [None if math.isnan(x) else x
                                       for x in self.r2_per_subgroup],
                   "r3_per_subgroup": [None if math.isnan(x) else x
                                       for x in self.r3_per_subgroup],
                   "horizon_vfs": self.horizon_vfs,
                   "num_transmissions": self.num_transmissions}
        return json.dumps(payload, indent=2)


_MAX_EXACT_DEVICES = 64
_MAX_EXACT_SPAN = 512


def _expected_rounded_mean(values: np.ndarray, pmf: np.ndarray, n: int) -> float:
    """E[round(mean of n iid draws)] for a per-device integer-value pmf.

    The per-replication estimator rounds a subgroup mean to the nearest
    integer; applied to an expected trace that operator is degenerate and
    systematically biased, so the analytic engine reports the estimator's
    expectation instead. Small subgroups are convolved exactly; large ones
    use a normal approximation of the sample mean.
    """
    total = float(pmf.sum())
    if total <= 0.0 or n <= 0:
        return math.nan
    p = pmf / total
    mu = float(p @ values)
    if n == 1 and p.size == 1:
        return round_half_away(mu)
    span = int(values.max() - values.min())
    if n <= _MAX_EXACT_DEVICES and span <= _MAX_EXACT_SPAN:
        vmin = int(values.min())
        atoms = np.zeros(span + 1)
        np.add.at(atoms, (values - vmin).astype(int), p)
        dist = np.array([1.0])
        for _ in range(n):
            dist = np.convolve(dist, atoms)
        sums = np.arange(dist.size, dtype=float) + n * vmin
        rounded = np.floor(np.abs(sums / n) + 0.5) * np.sign(sums)
        return float(dist @ rounded)
    sigma = math.sqrt(max(float(p @ (values - mu) ** 2), 0.0) / n)
    if sigma < 1e-9:
        return round_half_away(mu)
    lo = int(math.floor(mu - 8.0 * sigma))
    hi = int(math.ceil(mu + 8.0 * sigma))
    js = np.arange(lo, hi + 1, dtype=float)
    upper = 0.5 * (1.0 + np.vectorize(math.erf)((js + 0.5 - mu) / (sigma * math.sqrt(2.0))))
    lower = 0.5 * (1.0 + np.vectorize(math.erf)((js - 0.5 - mu) / (sigma * math.sqrt(2.0))))
    return float(js @ (upper - lower))


def _subgroup_mean(values: np.ndarray) -> float:
    valid = values[~np.isnan(values)]
    return float(valid.mean()) if valid.size else math.nan


def _weighted_attempt_mean(weights: np.ndarray) -> np.ndarray:
    """Per-subgroup weighted mean of the attempt index; 0 where no weight."""
    r_slots = weights.shape[1]
    r_axis = np.arange(r_slots, dtype=float)
    num = (weights.sum(axis=0) * r_axis[:, None]).sum(axis=0)
    den = weights.sum(axis=(0, 1))
    out = np.zeros(weights.shape[2])
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def access_metrics(trace: ProtocolTrace, plan: PagingPlan,
                   config: ScenarioConfig):
    """Success probability, access delay, and retransmission means."""
    if plan.num_devices == 0 or trace.total_paged() == 0:
        raise EmptyTrace("no paged devices in trace")
    paged_q = trace.alpha[:, 1, :].sum(axis=0)
    p_access = 1.0 - trace.total_failed() / trace.total_paged()

    vfs = np.arange(trace.msg4_success.shape[0], dtype=float)
    num = (trace.msg4_success * vfs[:, None]).sum(axis=0)
    analytic = trace.provenance == "analytic"
    i_star = np.full(plan.num_subgroups, math.nan)
    for q in range(plan.num_subgroups):
        done = float(trace.msg4_success[:, q].sum())
        if paged_q[q] <= 0 or done <= 0:
            continue
        if analytic:
            mask = trace.msg4_success[:, q] > 0
            vals, wts = vfs[mask], trace.msg4_success[mask, q]
            missing = paged_q[q] - done
            if missing > 1e-9:        # failed devices contribute index zero
                vals = np.concatenate(([0.0], vals))
                wts = np.concatenate(([missing], wts))
            i_star[q] = _expected_rounded_mean(vals, wts,
                                               int(round(paged_q[q])))
        else:
            i_star[q] = round_half_away(num[q] / paged_q[q])
    paging_vfs = np.asarray(plan.paging_vfs, dtype=float)
    d_access = _subgroup_mean((i_star - paging_vfs) * config.vf_duration)

    r2 = _weighted_attempt_mean(trace.msg2_failures)
    r3 = _weighted_attempt_mean(trace.msg3_exposure)
    return p_access, d_access, i_star, r2, r3


def delay_metrics(trace: ProtocolTrace, schedule: PtmSchedule,
                  plan: PagingPlan, config: ScenarioConfig, i_star: np.ndarray):
    """Idle wait, multicast transmission, total, and whole-service delays."""
    if schedule.num_transmissions == 0:
        raise EmptyTrace("no multicast transmissions scheduled")
    members = schedule.members_matrix(plan.num_subgroups)
    starts = np.array([t.start_vf for t in schedule.transmissions], dtype=float)
    analytic = trace.provenance == "analytic"
    i_star2 = np.full(plan.num_subgroups, math.nan)
    for q in range(plan.num_subgroups):
        weight = float(members[:, q].sum())
        if weight <= 0:
            continue
        if analytic:
            mask = members[:, q] > 0
            i_star2[q] = _expected_rounded_mean(starts[mask], members[mask, q],
                                                max(int(round(weight)), 1)) - 1.0
        else:
            i_star2[q] = round_half_away((starts @ members[:, q]) / weight) - 1.0
    d_idle = _subgroup_mean((i_star2 - i_star) * config.vf_duration)
    durations = np.array([t.duration_vfs for t in schedule.transmissions], dtype=float)
    d_tx = float(durations.mean()) * config.vf_duration
    last = schedule.transmissions[-1]
    d_service = (last.start_vf + last.duration_vfs) * config.vf_duration
    return d_idle, d_tx, d_service


def energy_metrics(config: ScenarioConfig, r2: np.ndarray, r3: np.ndarray,
                   paged_q: np.ndarray, d_idle: float, d_tx: float):
    """Per-device access and total energy in millijoules."""
    t1, t2, t3, t4 = config.msg_tx_times
    etx, erx, eidle = config.power_tx, config.power_rx, config.power_idle
    e_aq = ((etx * t1 + erx * t2) * r2
            + (etx * t1 + erx * t2 + etx * t3) * (r3 + 1.0)
            + eidle * config.backoff_window * r2
            + erx * t4) / 1000.0
    e_aq = np.where(paged_q > 0, e_aq, math.nan)
    e_access = _subgroup_mean(e_aq)
    e_ptm = etx if config.ptm_energy_mode == "as-written" else erx
    e_total = e_access + (eidle * d_idle + e_ptm * d_tx) / 1000.0
    return e_access, e_total


def resource_metrics(trace: ProtocolTrace, schedule: PtmSchedule,
                     config: ScenarioConfig):
    """UL/DL utilization over the common horizon (RA tail plus last drain)."""
    horizon = max(trace.ra_end_vf, schedule.last_end_vf)
    if config.horizon != "auto":
        horizon = int(config.horizon)
    horizon = max(horizon, 1)
    u0, d0 = float(config.ul_budget_per_vf), float(config.dl_budget_per_vf)
    base_ul = u0 - config.prach_cost

    ul_left = np.full(horizon + 1, base_ul)
    dl_left = np.full(horizon + 1, d0)
    n = min(trace.ra_end_vf, horizon)
    ul_left[1: n + 1] = trace.ul_leftover[1: n + 1]
    dl_left[1: n + 1] = trace.dl_leftover[1: n + 1]
    m = min(schedule.drain.shape[0] - 1, horizon)
    if m >= 1:
        dl_left[1: m + 1] -= schedule.drain[1: m + 1]

    r_ul = 1.0 - float(ul_left[1:].sum()) / (horizon * u0)
    r_dl = 1.0 - float(dl_left[1:].sum()) / (horizon * d0)
    return r_ul, r_dl, horizon


def compute_report(trace: ProtocolTrace, schedule: PtmSchedule,
                   plan: PagingPlan, config: ScenarioConfig,
                   derived: DerivedQuantities) -> MetricsReport:
    """All metrics for one finished run."""
    p_access, d_access, i_star, r2, r3 = access_metrics(trace, plan, config)
    d_idle, d_tx, d_service = delay_metrics(trace, schedule, plan, config, i_star)
    d_total = d_access + d_idle + d_tx
    paged_q = trace.alpha[:, 1, :].sum(axis=0)
    e_access, e_total = energy_metrics(config, r2, r3, paged_q, d_idle, d_tx)
    r_ul, r_dl, horizon = resource_metrics(trace, schedule, config)
    return MetricsReport(
        provenance=trace.provenance,
        access_success_prob=p_access,
        avg_access_delay_ms=d_access,
        avg_idle_delay_ms=d_idle,
        avg_tx_delay_ms=d_tx,
        avg_total_delay_ms=d_total,
        service_delay_ms=d_service,
        avg_access_energy_mj=e_access,
        avg_total_energy_mj=e_total,
        ul_utilization=r_ul,
        dl_utilization=r_dl,
        r2_per_subgroup=r2,
        r3_per_subgroup=r3,
        horizon_vfs=horizon,
        num_transmissions=schedule.num_transmissions,
    )

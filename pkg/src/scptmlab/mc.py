"""Per-device Monte Carlo simulator of the same protocol.

Each replication pre-draws all randomness (preamble picks and backoff draws
per attempt, RAR selection keys per VF) from PCG64 streams, then runs a fully
deterministic kernel. The kernel is numba-compiled when available (see
accel.py); the fallback executes the identical source, so a given seed yields
bit-identical traces on both paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .accel import maybe_njit, numba_enabled
from .config import HARD_HORIZON_CAP, DerivedQuantities, ScenarioConfig
from .paging import PagingPlan
from .trace import HorizonExceeded, ProtocolTrace

RNG_NAME = "PCG64"

EV_MSG1 = 1
EV_MSG2_OK = 2
EV_MSG2_MISS = 3
EV_MSG3_TX = 4
EV_CONNECTED = 5
EV_FAILED = 6
EV_CRT_RETRY = 7

EVENT_NAMES = {
    EV_MSG1: "msg1",
    EV_MSG2_OK: "msg2_ok",
    EV_MSG2_MISS: "msg2_miss",
    EV_MSG3_TX: "msg3_tx",
    EV_CONNECTED: "connected",
    EV_FAILED: "failed",
    EV_CRT_RETRY: "crt_retry",
}


def _kernel_impl(q_of_dev, paging_vf, n_attempts, k, m_max, b, n_rar, pool,
                 u_cost, d_cost, ul_budget, d0, d_rar, fixed_horizon,
                 pre_preamble, pre_backoff, rar_keys,
                 alpha, alpha_star, fail2, exposure, msg4, failures,
                 p_arr, c_used, ul_left, dl_left,
                 beta_tot, beta_star_tot, gamma_tot, gamma_star_tot,
                 completion_vf, fail_vf, attempts_made, events):
    n = q_of_dev.shape[0]
    cap = rar_keys.shape[0]

    contend_head = np.full(cap, -1, np.int32)
    contend_next = np.full(n, -1, np.int32)
    msg1_head = np.full(cap, -1, np.int32)
    msg1_next = np.full(n, -1, np.int32)
    counts = np.zeros((cap, pool), np.int32)
    cur_r = np.zeros(n, np.int32)
    winner = np.zeros(n, np.int8)

    qcap = n * (n_attempts + 1) + 1
    q3_dev = np.zeros(qcap, np.int32)
    q3_vf = np.zeros(qcap, np.int32)
    q3_head = 0
    q3_tail = 0
    q4_dev = np.zeros(qcap, np.int32)
    q4_vf = np.zeros(qcap, np.int32)
    q4_head = 0
    q4_tail = 0

    tmp = np.zeros(n, np.int32)
    n_events = 0
    ev_cap = events.shape[0]
    active = 0

    for dev in range(n - 1, -1, -1):
        vf0 = paging_vf[dev]
        cur_r[dev] = 1
        contend_next[dev] = contend_head[vf0]
        contend_head[vf0] = dev
        active += 1

    last_vf = cap - (m_max + b + k + 3)
    ra_end = -1
    vf = 0
    while vf < last_vf - 1:
        vf += 1
        if fixed_horizon > 0 and vf > fixed_horizon:
            ra_end = fixed_horizon
            break

        # Msg1: collect this VF's contenders in device order.
        n_cont = 0
        dev = contend_head[vf]
        while dev >= 0:
            tmp[n_cont] = dev
            n_cont += 1
            dev = contend_next[dev]
        if n_cont > 0:
            order = np.sort(tmp[:n_cont])
            for idx in range(n_cont):
                dev = order[idx]
                r = cur_r[dev]
                c = pre_preamble[dev, r]
                counts[vf, c] += 1
                alpha[vf, r, q_of_dev[dev]] += 1.0
                attempts_made[dev] = r
                msg1_next[dev] = msg1_head[vf]
                msg1_head[vf] = dev
                if n_events < ev_cap:
                    events[n_events, 0] = vf
                    events[n_events, 1] = dev
                    events[n_events, 2] = EV_MSG1
                    events[n_events, 3] = c
                    n_events += 1
            used = 0
            singles = 0
            for c in range(pool):
                if counts[vf, c] == 1:
                    singles += counts[vf, c]
                if counts[vf, c] > 0:
                    used += 1
            c_used[vf] = used
            p_arr[vf] = singles / n_cont
        else:
            c_used[vf] = 0.0
            p_arr[vf] = 1.0

        # Msg3: strict FIFO against the UL budget; only entries granted in an
        # earlier VF are eligible.
        ul = ul_budget
        scan = q3_head
        any_eligible = False
        while scan < q3_tail:
            if q3_vf[scan] < vf:
                any_eligible = True
                beta_tot[vf, cur_r[q3_dev[scan]]] += 1.0
            scan += 1
        while q3_head < q3_tail and q3_vf[q3_head] < vf:
            dev = q3_dev[q3_head]
            q = q_of_dev[dev]
            if u_cost[q] > ul:
                break
            q3_head += 1
            ul -= u_cost[q]
            r = cur_r[dev]
            beta_star_tot[vf, r] += 1.0
            if n_events < ev_cap:
                events[n_events, 0] = vf
                events[n_events, 1] = dev
                events[n_events, 2] = EV_MSG3_TX
                events[n_events, 3] = 0 if winner[dev] == 1 else 1
                n_events += 1
            if winner[dev] == 1:
                q4_dev[q4_tail] = dev
                q4_vf[q4_tail] = vf
                q4_tail += 1
            else:
                # Collision detected at CRT expiry, then backoff.
                retry = vf + m_max + pre_backoff[dev, r]
                if r + 1 > n_attempts:
                    alpha[retry, r + 1, q] += 1.0
                    failures[retry, q] += 1.0
                    fail_vf[dev] = retry
                    active -= 1
                    if n_events < ev_cap:
                        events[n_events, 0] = retry
                        events[n_events, 1] = dev
                        events[n_events, 2] = EV_FAILED
                        events[n_events, 3] = r
                        n_events += 1
                else:
                    cur_r[dev] = r + 1
                    contend_next[dev] = contend_head[retry]
                    contend_head[retry] = dev
        ul_left[vf] = ul

        # DL budget after the flat Msg2 cost.
        dl = d0 - d_rar if any_eligible else d0

        # Msg4: FIFO within the contention-resolution window.
        scan = q4_head
        while scan < q4_tail:
            if q4_vf[scan] < vf:
                gamma_tot[vf, cur_r[q4_dev[scan]]] += 1.0
            scan += 1
        while q4_head < q4_tail and q4_vf[q4_head] < vf:
            dev = q4_dev[q4_head]
            q = q_of_dev[dev]
            if d_cost[q] > dl:
                break
            q4_head += 1
            dl -= d_cost[q]
            r = cur_r[dev]
            gamma_star_tot[vf, r] += 1.0
            msg4[vf, q] += 1.0
            completion_vf[dev] = vf
            active -= 1
            if n_events < ev_cap:
                events[n_events, 0] = vf
                events[n_events, 1] = dev
                events[n_events, 2] = EV_CONNECTED
                events[n_events, 3] = r
                n_events += 1
        # Unserved entries whose window closed retry next VF, no backoff.
        while q4_head < q4_tail and q4_vf[q4_head] + m_max <= vf:
            dev = q4_dev[q4_head]
            q4_head += 1
            r = cur_r[dev]
            q = q_of_dev[dev]
            if r + 1 > n_attempts:
                alpha[vf + 1, r + 1, q] += 1.0
                failures[vf + 1, q] += 1.0
                fail_vf[dev] = vf + 1
                active -= 1
                if n_events < ev_cap:
                    events[n_events, 0] = vf + 1
                    events[n_events, 1] = dev
                    events[n_events, 2] = EV_FAILED
                    events[n_events, 3] = r
                    n_events += 1
            else:
                cur_r[dev] = r + 1
                contend_next[dev] = contend_head[vf + 1]
                contend_head[vf + 1] = dev
                if n_events < ev_cap:
                    events[n_events, 0] = vf
                    events[n_events, 1] = dev
                    events[n_events, 2] = EV_CRT_RETRY
                    events[n_events, 3] = r
                    n_events += 1
        dl_left[vf] = dl

        # Msg2 resolution for the cohort that sent Msg1 k VFs ago.
        t = vf - k
        if t >= 1 and msg1_head[t] >= 0:
            n_coh = 0
            dev = msg1_head[t]
            while dev >= 0:
                tmp[n_coh] = dev
                n_coh += 1
                dev = msg1_next[dev]
            order = np.sort(tmp[:n_coh])
            granted = np.zeros(pool, np.int8)
            used = int(c_used[t])
            if used <= n_rar:
                for c in range(pool):
                    if counts[t, c] > 0:
                        granted[c] = 1
            else:
                chosen = np.zeros(pool, np.int8)
                for _sel in range(n_rar):
                    best = -1
                    best_key = 2.0
                    for c in range(pool):
                        if counts[t, c] > 0 and chosen[c] == 0 and rar_keys[t, c] < best_key:
                            best_key = rar_keys[t, c]
                            best = c
                    if best >= 0:
                        chosen[best] = 1
                granted = chosen
            for idx in range(n_coh):
                dev = order[idx]
                r = cur_r[dev]
                q = q_of_dev[dev]
                c = pre_preamble[dev, r]
                if granted[c] == 1:
                    alpha_star[vf, r, q] += 1.0
                    winner[dev] = 1 if counts[t, c] == 1 else 0
                    if winner[dev] == 0:
                        exposure[vf, r, q] += 1.0
                    q3_dev[q3_tail] = dev
                    q3_vf[q3_tail] = vf
                    q3_tail += 1
                    if n_events < ev_cap:
                        events[n_events, 0] = vf
                        events[n_events, 1] = dev
                        events[n_events, 2] = EV_MSG2_OK
                        events[n_events, 3] = c
                        n_events += 1
                else:
                    fail2[t, r, q] += 1.0
                    retry = vf + pre_backoff[dev, r]
                    if n_events < ev_cap:
                        events[n_events, 0] = vf
                        events[n_events, 1] = dev
                        events[n_events, 2] = EV_MSG2_MISS
                        events[n_events, 3] = c
                        n_events += 1
                    if r + 1 > n_attempts:
                        alpha[retry, r + 1, q] += 1.0
                        failures[retry, q] += 1.0
                        fail_vf[dev] = retry
                        active -= 1
                        if n_events < ev_cap:
                            events[n_events, 0] = retry
                            events[n_events, 1] = dev
                            events[n_events, 2] = EV_FAILED
                            events[n_events, 3] = r
                            n_events += 1
                    else:
                        cur_r[dev] = r + 1
                        contend_next[dev] = contend_head[retry]
                        contend_head[retry] = dev
            msg1_head[t] = -1

        if active == 0:
            ra_end = vf
            break

    return ra_end, n_events


class _KernelHolder:
    func = None
    jitted = None


def _get_kernel():
    if _KernelHolder.func is None or _KernelHolder.jitted != numba_enabled():
        _KernelHolder.func = maybe_njit(_kernel_impl)
        _KernelHolder.jitted = numba_enabled()
    return _KernelHolder.func


@dataclass
class McTrace:
    """Replication result: aggregate trace plus per-device outcomes."""
    trace: ProtocolTrace
    seed: int
    rng_name: str
    subgroup: np.ndarray        # (N,)
    paging_vf: np.ndarray       # (N,)
    completion_vf: np.ndarray   # (N,) -1 when not connected
    fail_vf: np.ndarray         # (N,) -1 when not failed
    attempts: np.ndarray        # (N,)
    events: np.ndarray          # (n_events, 4): vf, device, code, aux

    def dump_events_csv(self, path: str) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"# scptmlab-events v1 rng={self.rng_name} seed={self.seed}"])
            writer.writerow(["vf", "device", "event", "detail"])
            for vf, dev, code, aux in self.events:
                writer.writerow([vf, dev, EVENT_NAMES.get(int(code), code), aux])


def _device_layout(plan: PagingPlan):
    n = plan.num_devices
    subgroup = np.zeros(n, np.int32)
    paging = np.zeros(n, np.int32)
    pos = 0
    for q, (vf, size) in enumerate(zip(plan.paging_vfs, plan.group_sizes)):
        subgroup[pos: pos + size] = q
        paging[pos: pos + size] = vf
        pos += size
    return subgroup, paging


def _horizon_guess(plan: PagingPlan, d: DerivedQuantities, cfg: ScenarioConfig) -> int:
    last = plan.paging_vfs[-1] if plan.paging_vfs else 1
    per_attempt = d.msg2_wait_vfs + d.crt_vfs + d.backoff_vfs + 3
    queueing = math.ceil(plan.num_devices * cfg.msg3_cost
                         / max(cfg.ul_budget_per_vf - cfg.prach_cost, 1))
    return last + (cfg.max_retransmissions + 1) * per_attempt + queueing + 64


def run_replication(config: ScenarioConfig, derived: DerivedQuantities,
                    plan: PagingPlan, seed: int) -> McTrace:
    """One seeded replication; identical inputs give bit-identical traces."""
    cfg, d = config, derived
    n = plan.num_devices
    q_count = max(plan.num_subgroups, 1)
    r_slots = cfg.max_retransmissions + 2
    subgroup, paging = _device_layout(plan)
    u_cost = np.full(q_count, float(cfg.msg3_cost))
    d_cost = np.full(q_count, float(cfg.msg4_cost))

    dev_ss, rar_ss = np.random.SeedSequence(entropy=seed).spawn(2)
    dev_rng = np.random.Generator(np.random.PCG64(dev_ss))
    pre_preamble = dev_rng.integers(
        0, cfg.preamble_pool, size=(max(n, 1), cfg.max_retransmissions + 1),
        dtype=np.int32)
    pre_backoff = dev_rng.integers(
        1, d.backoff_vfs + 1, size=(max(n, 1), cfg.max_retransmissions + 1),
        dtype=np.int32)

    fixed = -1 if cfg.horizon == "auto" else int(cfg.horizon)
    margin = d.crt_vfs + d.backoff_vfs + d.msg2_wait_vfs + 4
    cap = (_horizon_guess(plan, d, cfg) if fixed < 0 else fixed) + margin + 2

    while True:
        if cap > HARD_HORIZON_CAP + margin:
            raise HorizonExceeded(
                f"replication did not settle within {HARD_HORIZON_CAP} VFs")
        rar_rng = np.random.Generator(np.random.PCG64(rar_ss))
        rar_keys = rar_rng.random((cap, cfg.preamble_pool))

        alpha = np.zeros((cap, r_slots, q_count))
        alpha_star = np.zeros_like(alpha)
        fail2 = np.zeros_like(alpha)
        exposure = np.zeros_like(alpha)
        msg4 = np.zeros((cap, q_count))
        failures = np.zeros((cap, q_count))
        p_arr = np.ones(cap)
        c_used = np.zeros(cap)
        ul_left = np.full(cap, float(cfg.ul_budget_per_vf - cfg.prach_cost))
        dl_left = np.full(cap, float(cfg.dl_budget_per_vf))
        beta_tot = np.zeros((cap, r_slots))
        beta_star_tot = np.zeros((cap, r_slots))
        gamma_tot = np.zeros((cap, r_slots))
        gamma_star_tot = np.zeros((cap, r_slots))
        completion = np.full(max(n, 1), -1, np.int32)
        fail_at = np.full(max(n, 1), -1, np.int32)
        attempts = np.zeros(max(n, 1), np.int32)
        events = np.zeros((n * (cfg.max_retransmissions + 1) * 5 + 16, 4), np.int64)

        if n == 0:
            ra_end, n_events = 1, 0
            break
        kernel = _get_kernel()
        ra_end, n_events = kernel(
            subgroup, paging, cfg.max_retransmissions, d.msg2_wait_vfs,
            d.crt_vfs, d.backoff_vfs, d.rar_capacity, cfg.preamble_pool,
            u_cost, d_cost, float(cfg.ul_budget_per_vf - cfg.prach_cost),
            float(cfg.dl_budget_per_vf), float(cfg.rar_cost), fixed,
            pre_preamble, pre_backoff, rar_keys,
            alpha, alpha_star, fail2, exposure, msg4, failures,
            p_arr, c_used, ul_left, dl_left,
            beta_tot, beta_star_tot, gamma_tot, gamma_star_tot,
            completion, fail_at, attempts, events)
        if ra_end >= 0:
            break
        cap *= 2

    # Terminal failures may be timestamped a few VFs past the last active one.
    if fixed < 0 and n > 0:
        last_fail = int(fail_at.max()) if fail_at.max() >= 0 else 0
        ra_end = max(ra_end, last_fail)
    truncated = fixed > 0 and bool(
        ((completion[:n] < 0) & (fail_at[:n] < 0)).any())
    end = ra_end + 1
    trace = ProtocolTrace(
        provenance="montecarlo",
        num_subgroups=plan.num_subgroups,
        max_attempts=cfg.max_retransmissions,
        ra_end_vf=ra_end,
        truncated=truncated,
        alpha=alpha[:end], alpha_star=alpha_star[:end],
        msg2_failures=fail2[:end], msg3_exposure=exposure[:end],
        msg4_success=msg4[:end], failures=failures[:end],
        p=p_arr[:end], c_used=c_used[:end],
        ul_leftover=ul_left[:end], dl_leftover=dl_left[:end],
        beta_tot=beta_tot[:end], beta_star_tot=beta_star_tot[:end],
        gamma_tot=gamma_tot[:end], gamma_star_tot=gamma_star_tot[:end],
    )
    return McTrace(
        trace=trace, seed=seed, rng_name=RNG_NAME,
        subgroup=subgroup[:n], paging_vf=paging[:n],
        completion_vf=completion[:n], fail_vf=fail_at[:n],
        attempts=attempts[:n], events=events[:n_events].copy(),
    )

"""Expected-value recursion of the full paging + random-access protocol.

The engine evolves real-valued expected device counts VF by VF. Each paged
cohort contends on the preamble pool; Msg2 grants are capped by the RAR
capacity, Msg3 by the UL budget, Msg4 by the DL budget; capacity misses and
Msg3 collisions feed back into later attempts through backoff and the
contention-resolution window. Bracketed capacity splits round half away from
zero, then a deterministic repair keeps ledger sums within budget.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .config import HARD_HORIZON_CAP, DerivedQuantities, ScenarioConfig
from .contention import occupancy_distribution, singleton_probability
from .paging import PagingPlan
from .trace import HorizonExceeded, ProtocolTrace

_CHUNK = 512


def _round_half_away(arr: np.ndarray) -> np.ndarray:
    return np.floor(np.abs(arr) + 0.5) * np.sign(arr)


@lru_cache(maxsize=8192)
def _count_rates(total: int, pool: int, n_rar: int) -> tuple[float, float, float]:
    """Per-device Msg2 grant probability, singleton probability, and mean
    used-preamble count for an integer number of contenders.

    The grant probability averages min(1, N_RAR/c) over the exact
    used-preamble distribution rather than evaluating it at the mean count.
    """
    if total <= 0:
        return 1.0, 1.0, 0.0
    q = occupancy_distribution(total, pool)
    norm = float(q.sum())
    cs = np.arange(1, q.size + 1, dtype=float)
    if norm <= 0.0:
        grant, c_mean = 1.0, 1.0
    else:
        grant = float((q * np.minimum(1.0, n_rar / cs)).sum()) / norm
        c_mean = float((q * cs).sum()) / norm
    return grant, singleton_probability(total, pool), c_mean


def _mixed_rates(det: float, retry: float, pool: int,
                 n_rar: int) -> tuple[float, float, float]:
    """Msg2-stage rates with the retry mass treated as Poisson-distributed.

    First-attempt mass arrives deterministically (paging counts are fixed),
    but retry arrivals are sums of many small independent scatter terms, so
    their count fluctuates; evaluating the capacity threshold at the mean
    count would miss every capacity overshoot near N_RAR. Rates are averaged
    size-biased (per device present, Palm view of the mixture).
    """
    n0 = int(round(det))
    lam = max(det + retry - n0, 0.0)
    if lam < 1e-12:
        support = [(n0, 1.0)]
    else:
        kmax = int(lam + 6.0 * math.sqrt(lam) + 12.0)
        support = []
        w = math.exp(-lam)
        for k in range(kmax + 1):
            support.append((n0 + k, w))
            w *= lam / (k + 1)
    num_g = num_gp = num_c = den = wsum = 0.0
    for a, wt in support:
        if a <= 0 or wt <= 0.0:
            continue
        g, p, c_mean = _count_rates(a, pool, n_rar)
        num_g += wt * a * g
        num_gp += wt * a * g * p
        num_c += wt * c_mean
        den += wt * a
        wsum += wt
    if den <= 0.0 or wsum <= 0.0:
        return 1.0, 1.0, 0.0
    g_eff = num_g / den
    p_eff = (num_gp / den) / g_eff if g_eff > 0.0 else 1.0
    return g_eff, p_eff, num_c / wsum


_SQRT2 = math.sqrt(2.0)


def _gauss_capped(mean_count: float, var: float, capacity: float) -> float:
    """E[min(Q, capacity)] for Q ~ Normal(mean_count, var).

    Serving min(mean, capacity) ignores that a fluctuating queue sometimes
    overshoots a capacity it only reaches on average; keeping the expectation
    reproduces the spill-over the per-device simulation exhibits near
    saturation, while a deterministic queue (var -> 0) is served exactly.
    """
    if mean_count <= 0.0 or capacity <= 0.0:
        return 0.0
    if var <= 1e-12:
        return min(mean_count, capacity)
    sigma = math.sqrt(var)
    z = (capacity - mean_count) / sigma
    if z > 8.0:
        return mean_count
    if z < -8.0:
        return capacity
    phi = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    tail = 0.5 * (1.0 - math.erf(z / _SQRT2))      # P(Q > capacity)
    overshoot = sigma * (phi - z * tail)           # E[(Q - capacity)+]
    return min(max(mean_count - overshoot, 0.0), min(mean_count, capacity))


def _capped_share(queue: np.ndarray, cost: np.ndarray, budget: float) -> np.ndarray:
    """Serve a queue against a budget: all of it if it fits, else the exact
    proportional share. Proportionality must be unbiased across cells —
    any priority by position would starve late-attempt mass systematically.

    ``queue`` has subgroups on the last axis; ``cost`` is per-subgroup RBs.
    """
    demand = float((queue * cost).sum())
    if demand <= budget or demand <= 0.0:
        return queue.copy()
    return queue * (budget / demand)


class _State:
    """Growable per-run arrays; VF axis extends in chunks as mass scatters forward."""

    def __init__(self, r_slots: int, num_subgroups: int, crt_vfs: int):
        self.r_slots = r_slots
        self.q = num_subgroups
        self.m = crt_vfs
        self.size = _CHUNK
        self.alpha = np.zeros((self.size, r_slots, self.q))
        self.alpha_star = np.zeros_like(self.alpha)
        self.fail2 = np.zeros_like(self.alpha)
        self.exposure = np.zeros_like(self.alpha)
        self.msg4 = np.zeros((self.size, self.q))
        self.failures = np.zeros((self.size, self.q))
        self.p = np.ones(self.size)
        self.c_used = np.zeros(self.size)
        self.ul_left = np.zeros(self.size)
        self.dl_left = np.zeros(self.size)
        self.beta_tot = np.zeros((self.size, r_slots))
        self.beta_star_tot = np.zeros((self.size, r_slots))
        self.gamma_tot = np.zeros((self.size, r_slots))
        self.gamma_star_tot = np.zeros((self.size, r_slots))

    def ensure(self, vf: int) -> None:
        if vf < self.size:
            return
        new = max(vf + 1, self.size + _CHUNK)
        for name in ("alpha", "alpha_star", "fail2", "exposure", "msg4",
                     "failures", "p", "c_used", "ul_left", "dl_left",
                     "beta_tot", "beta_star_tot", "gamma_tot", "gamma_star_tot"):
            old = getattr(self, name)
            grown = np.zeros((new,) + old.shape[1:])
            if name == "p":
                grown[:] = 1.0
            grown[: self.size] = old
            setattr(self, name, grown)
        self.size = new


def run_fluid(config: ScenarioConfig, derived: DerivedQuantities,
              plan: PagingPlan) -> ProtocolTrace:
    """Run the expected-value recursion to quiescence (or a fixed horizon)."""
    cfg, d = config, derived
    n_attempts = cfg.max_retransmissions          # attempts 1..R contend
    r_slots = n_attempts + 2                      # index R+1 = terminal
    q_count = max(plan.num_subgroups, 1)
    k, m_max, b = d.msg2_wait_vfs, d.crt_vfs, d.backoff_vfs
    pool, n_rar = cfg.preamble_pool, d.rar_capacity
    floor = cfg.mass_floor
    u_cost = np.full(q_count, float(cfg.msg3_cost))
    d_cost = np.full(q_count, float(cfg.msg4_cost))
    ul_budget = float(cfg.ul_budget_per_vf - cfg.prach_cost)
    fixed_horizon = None if cfg.horizon == "auto" else int(cfg.horizon)

    st = _State(r_slots, q_count, m_max)
    st.ul_left[:] = ul_budget
    st.dl_left[:] = float(cfg.dl_budget_per_vf)

    last_paging_vf = plan.paging_vfs[-1] if plan.paging_vfs else 0
    for q, (vf, n) in enumerate(zip(plan.paging_vfs, plan.group_sizes)):
        st.ensure(vf)
        st.alpha[vf, 1, q] = n

    # Msg3 queue: arrival-ordered entries of (unique-preamble, collided) mass,
    # served oldest first so backlogged grants wait exactly as a FIFO would.
    q3: list[tuple[np.ndarray, np.ndarray, float]] = []
    gamma = np.zeros((r_slots, m_max + 1, q_count))
    gamma_var = np.zeros(m_max + 1)       # count variance per CRT position
    cohort_mass = {}                           # Msg1 VF -> unresolved contender mass
    grant_rate = {}                            # Msg1 VF -> per-device grant rate

    phi = 1.0 / b
    ra_end = 0
    truncated = False
    vf = 0
    while True:
        vf += 1
        if vf > HARD_HORIZON_CAP:
            raise HorizonExceeded(f"run did not settle within {HARD_HORIZON_CAP} VFs")
        if fixed_horizon is not None and vf > fixed_horizon:
            truncated = True
            ra_end = fixed_horizon
            break
        st.ensure(vf + m_max + b + k + 2)

        a_now = st.alpha[vf]
        a_now[a_now < floor] = 0.0
        st.failures[vf] = a_now[n_attempts + 1]
        contending = float(a_now[1: n_attempts + 1].sum())
        if contending >= floor:
            det = float(a_now[1].sum())          # paged first attempts: fixed counts
            retry = max(contending - det, 0.0)   # scattered retries: fluctuating count
            g_eff, p_eff, c_rec = _mixed_rates(det, retry, pool, n_rar)
            st.c_used[vf] = c_rec
            st.p[vf] = p_eff
            det_frac = det / contending if contending > 0.0 else 0.0
            grant_rate[vf] = (g_eff, det_frac)
            cohort_mass[vf] = contending
        else:
            st.c_used[vf] = 0.0
            st.p[vf] = 1.0

        # Msg3 stage: serve the queue oldest entry first against the UL budget.
        queue_total = 0.0
        queue_var = 0.0
        queue_demand = 0.0
        for u_m, c_m, v_e in q3:
            entry = u_m + c_m
            queue_total += float(entry.sum())
            queue_var += v_e
            queue_demand += float((entry * u_cost).sum())
            st.beta_tot[vf] += entry.sum(axis=1)
        # Probability at least one queued device is eligible this VF, under a
        # Poisson occupancy model; the flat Msg2 cost is charged in expectation
        # so vanishing mass tails do not keep the whole cost alive.
        msg2_charge = 1.0 - math.exp(-queue_total)
        sent_u = np.zeros((r_slots, q_count))
        sent_c = np.zeros((r_slots, q_count))
        sent_var_u = 0.0
        if queue_total > 0.0 and queue_demand > 0.0:
            cost_bar = queue_demand / queue_total
            ul = cost_bar * _gauss_capped(queue_total, queue_var,
                                          ul_budget / cost_bar)
        else:
            ul = ul_budget
        leftover_q3: list[tuple[np.ndarray, np.ndarray, float]] = []
        for u_m, c_m, v_e in q3:
            entry = u_m + c_m
            mass = float(entry.sum())
            demand = float((entry * u_cost).sum())
            if demand <= 1e-15:
                continue
            u_share = float(u_m.sum()) / mass
            if ul <= 1e-12:
                leftover_q3.append((u_m, c_m, v_e))
                continue
            if demand <= ul:
                sent_u += u_m
                sent_c += c_m
                sent_var_u += v_e * u_share
                ul -= demand
                continue
            served = _capped_share(entry, u_cost, ul)
            with np.errstate(invalid="ignore", divide="ignore"):
                frac = np.where(entry > 0.0,
                                served / np.maximum(entry, 1e-300), 0.0)
            f = float(served.sum()) / mass
            sent_u += u_m * frac
            sent_c += c_m * frac
            sent_var_u += v_e * f * f * u_share
            ul -= float((served * u_cost).sum())
            rem_u, rem_c = u_m * (1.0 - frac), c_m * (1.0 - frac)
            if float((rem_u + rem_c).sum()) >= floor:
                leftover_q3.append((rem_u, rem_c, v_e * (1.0 - f * f)))
        q3 = leftover_q3
        st.beta_star_tot[vf] = (sent_u + sent_c).sum(axis=1)
        st.ul_left[vf] = max(ul_budget - float(((sent_u + sent_c) * u_cost).sum()), 0.0)
        # Collided Msg3 senders detect failure at CRT expiry, then back off.
        for j in range(1, b + 1):
            st.alpha[vf + m_max + j, 2: n_attempts + 2] += sent_c[1: n_attempts + 1] * phi

        # DL budget after the flat Msg2 cost.
        dl = float(cfg.dl_budget_per_vf) - cfg.rar_cost * msg2_charge

        # Msg4 stage: oldest CRT position first (FIFO in Msg3-send order).
        st.gamma_tot[vf] = gamma.sum(axis=(1, 2))
        served = np.zeros_like(gamma)
        gamma_count = float(gamma.sum())
        gamma_demand = float((gamma * d_cost).sum())
        if gamma_count > 0.0 and gamma_demand > 0.0 and dl > 0.0:
            cost_bar = gamma_demand / gamma_count
            dl_room = cost_bar * _gauss_capped(gamma_count, float(gamma_var.sum()),
                                               dl / cost_bar)
        else:
            dl_room = max(dl, 0.0)
        for m in range(m_max, 0, -1):
            layer = gamma[:, m, :]
            layer_mass = float(layer.sum())
            demand = float((layer * d_cost).sum())
            if demand <= 1e-15 or dl_room <= 1e-12:
                continue
            if demand <= dl_room:
                served[:, m, :] = layer
                gamma_var[m] = 0.0
                dl_room -= demand
            else:
                served[:, m, :] = _capped_share(layer, d_cost, dl_room)
                f = float(served[:, m, :].sum()) / layer_mass
                gamma_var[m] *= 1.0 - f * f
                dl_room = 0.0
        st.gamma_star_tot[vf] = served.sum(axis=(1, 2))
        st.msg4[vf] = served.sum(axis=(0, 1))
        st.dl_left[vf] = dl - float((served * d_cost).sum())
        leftover_gamma = gamma - served
        leftover_gamma[leftover_gamma < floor] = 0.0

        # Shift CRT positions; the last position expires into an immediate retry.
        expired = leftover_gamma[1: n_attempts + 1, m_max]
        st.alpha[vf + 1, 2: n_attempts + 2] += expired
        gamma = np.zeros_like(gamma)
        gamma[:, 2:, :] = leftover_gamma[:, 1:m_max, :]
        gamma[1: n_attempts + 1, 1] = sent_u[1: n_attempts + 1]
        new_gamma_var = np.zeros_like(gamma_var)
        new_gamma_var[2:] = gamma_var[1:m_max]
        new_gamma_var[1] = sent_var_u
        gamma_var = new_gamma_var

        # Msg2 resolution for the cohort that transmitted Msg1 k VFs ago;
        # grants join the Msg3 queue starting next VF.
        t = vf - k
        if t >= 1 and cohort_mass.get(t, 0.0) > 0.0:
            cohort = st.alpha[t, 1: n_attempts + 1]
            g_rate, det_frac = grant_rate.pop(t, (1.0, 1.0))
            granted = cohort * g_rate
            st.alpha_star[vf, 1: n_attempts + 1] = granted
            missed = cohort - granted
            st.fail2[t, 1: n_attempts + 1] = missed
            for j in range(1, b + 1):
                st.alpha[vf + j, 2: n_attempts + 2] += missed * phi
            collided = granted * (1.0 - st.p[t])
            st.exposure[vf, 1: n_attempts + 1] = collided
            new_u = np.zeros((r_slots, q_count))
            new_c = np.zeros((r_slots, q_count))
            new_u[1: n_attempts + 1] = granted - collided
            new_c[1: n_attempts + 1] = collided
            new_u[new_u < floor] = 0.0
            new_c[new_c < floor] = 0.0
            new_mass = float((new_u + new_c).sum())
            if new_mass >= floor:
                # Grant-count variance: binomial thinning of the deterministic
                # (paged) portion plus full Poisson variance of the retry part.
                det_granted = new_mass * det_frac
                entry_var = det_granted * (1.0 - g_rate) + (new_mass - det_granted)
                q3.append((new_u, new_c, entry_var))
            cohort_mass.pop(t, None)

        ra_end = vf
        in_flight = (
            float(st.alpha[vf + 1: vf + m_max + b + k + 2, 1:].sum())
            + sum(float((u_m + c_m).sum()) for u_m, c_m, _ in q3)
            + float(gamma.sum())
            + sum(cohort_mass.values())
        )
        if vf >= last_paging_vf and in_flight < floor:
            break

    trace = ProtocolTrace(
        provenance="analytic",
        num_subgroups=plan.num_subgroups,
        max_attempts=n_attempts,
        ra_end_vf=ra_end,
        truncated=truncated,
        alpha=st.alpha[: ra_end + 1],
        alpha_star=st.alpha_star[: ra_end + 1],
        msg2_failures=st.fail2[: ra_end + 1],
        msg3_exposure=st.exposure[: ra_end + 1],
        msg4_success=st.msg4[: ra_end + 1],
        failures=st.failures[: ra_end + 1],
        p=st.p[: ra_end + 1],
        c_used=st.c_used[: ra_end + 1],
        ul_leftover=st.ul_left[: ra_end + 1],
        dl_leftover=st.dl_left[: ra_end + 1],
        beta_tot=st.beta_tot[: ra_end + 1],
        beta_star_tot=st.beta_star_tot[: ra_end + 1],
        gamma_tot=st.gamma_tot[: ra_end + 1],
        gamma_star_tot=st.gamma_star_tot[: ra_end + 1],
    )
    return trace

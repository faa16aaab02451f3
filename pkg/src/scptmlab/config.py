"""Scenario parameters, validation, and derived protocol quantities.

A scenario is loaded from a JSON file whose keys match the ScenarioConfig
field names, optionally patched by ``key=value`` overrides. Every quantity
the engines need (Msg2 wait, CRT/backoff windows in VFs, RAR capacity,
paging cadence, RA pipeline length) is computed once in :func:`derive`.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

SCHEMES = ("SP", "GP", "eGP", "NeGP")

HARD_HORIZON_CAP = 100_000


class InvalidParameter(ValueError):
    """A scenario parameter violates an invariant; the message names it."""


@dataclass(frozen=True)
class ScenarioConfig:
    num_devices: int = 500
    preamble_pool: int = 54
    max_retransmissions: int = 10
    rao_per_frame: int = 2
    vf_duration: float = 5.0
    preamble_proc_delay: float = 5.0
    rar_window: float = 5.0
    backoff_window: float = 20.0
    contention_resolution_window: float = 48.0
    ul_budget_per_vf: int = 12
    # A PRACH cost equal to the whole UL budget would stall Msg3 forever;
    # the default reserves 6 of the 12 UL RBs for preambles.
    prach_cost: int = 6
    dl_budget_per_vf: int = 12
    rar_cost: int = 6
    msg3_cost: float = 1.0
    msg4_cost: float = 1.0
    multicast_payload: int = 12
    critical_interval: int = 5
    rar_overhead_fraction: float = 0.30
    msg_tx_times: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    power_tx: float = 500.0
    power_rx: float = 80.0
    power_idle: float = 3.0
    horizon: int | str = "auto"
    scheme: str = "NeGP"
    ptm_energy_mode: str = "as-written"
    # Scheme-level paging constants, overridable.
    sp_group_size: int = 16
    egp_group_size: int = 36
    egp_interval_ms: float = 30.0
    # Msg2 wait in VFs; None selects the formula (see derive()).
    msg2_wait_vfs: int | None = None
    # Expected-value mass below this many devices is treated as zero.
    mass_floor: float = 1e-6
    # Base population for the Msg3-retransmission mean; only
    # 'msg2_successes' is implemented, validated as an explicit choice so
    # alternative readings stay an extension point.
    eq36_base: str = "msg2_successes"


@dataclass(frozen=True)
class DerivedQuantities:
    msg2_wait_vfs: int          # k: VFs between Msg1 and Msg2
    crt_vfs: int                # M: contention-resolution window in VFs
    backoff_vfs: int            # B: backoff window in VFs
    rar_capacity: int           # N_RAR: preambles acknowledgeable per VF cohort
    group_size: int             # N_j for the configured scheme
    paging_interval_vfs: int    # i_j (0 for GP's single paging message)
    ra_pipeline_vfs: int        # F: contention-free paging->Msg4 length
    ptm_tx_vfs: int             # W: SC-PTM duration against the DL budget
    first_ptm_offset_vfs: int   # first transmission start, VFs after paging VF 1


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InvalidParameter(message)


def validate(config: ScenarioConfig) -> ScenarioConfig:
    """Check every invariant; returns the (normalized) config or raises."""
    c = config
    if isinstance(c.msg_tx_times, list):
        c = dataclasses.replace(c, msg_tx_times=tuple(c.msg_tx_times))
    _require(c.num_devices >= 0, "num_devices must be >= 0")
    for name in ("preamble_pool", "max_retransmissions", "rao_per_frame",
                 "ul_budget_per_vf", "dl_budget_per_vf", "sp_group_size",
                 "egp_group_size"):
        _require(getattr(c, name) > 0, f"{name} must be > 0")
    for name in ("vf_duration", "preamble_proc_delay", "rar_window",
                 "backoff_window", "contention_resolution_window",
                 "msg3_cost", "msg4_cost", "egp_interval_ms"):
        _require(getattr(c, name) > 0, f"{name} must be > 0")
    _require(c.prach_cost >= 0, "prach_cost must be >= 0")
    _require(c.rar_cost >= 0, "rar_cost must be >= 0")
    _require(c.prach_cost < c.ul_budget_per_vf,
             "prach_cost must be < ul_budget (Msg3 could never be sent)")
    _require(c.rar_cost < c.dl_budget_per_vf, "rar_cost must be < dl_budget")
    _require(0.0 <= c.rar_overhead_fraction < 1.0,
             "rar_overhead_fraction must lie in [0, 1)")
    _require(c.multicast_payload >= 1, "multicast_payload must be >= 1")
    _require(c.critical_interval >= 1, "critical_interval must be >= 1")
    _require(len(c.msg_tx_times) == 4, "msg_tx_times must have 4 entries")
    _require(all(t > 0 for t in c.msg_tx_times), "msg_tx_times must be > 0")
    for name in ("power_tx", "power_rx", "power_idle"):
        _require(getattr(c, name) >= 0, f"{name} must be >= 0")
    _require(c.scheme in SCHEMES,
             f"scheme must be one of {', '.join(SCHEMES)} (got {c.scheme!r})")
    _require(c.ptm_energy_mode in ("as-written", "rx-corrected"),
             "ptm_energy_mode must be 'as-written' or 'rx-corrected'")
    _require(c.eq36_base == "msg2_successes",
             "eq36_base: only 'msg2_successes' is implemented")
    if c.horizon != "auto":
        _require(isinstance(c.horizon, int) and 1 <= c.horizon <= HARD_HORIZON_CAP,
                 f"horizon must be 'auto' or an integer in [1, {HARD_HORIZON_CAP}]")
    if c.msg2_wait_vfs is not None:
        _require(c.msg2_wait_vfs >= 1, "msg2_wait_vfs must be >= 1")
    _require(c.mass_floor >= 0, "mass_floor must be >= 0")
    # Derived-quantity invariants are also validation failures.
    _require(_rar_capacity(c) >= 1, "rar_capacity would be < 1 "
             "(increase dl_budget or decrease rar_overhead_fraction)")
    return c


def _rar_capacity(c: ScenarioConfig) -> int:
    per_vf = math.floor((1.0 - c.rar_overhead_fraction) * c.dl_budget_per_vf)
    return per_vf * math.ceil(c.rar_window / c.vf_duration)


def derive(config: ScenarioConfig) -> DerivedQuantities:
    """Compute all derived counts for a validated config (pure function)."""
    c = config
    k = c.msg2_wait_vfs
    if k is None:
        # Msg2 wait: BS needs the processing + RAR window after Msg1,
        # averaged over the A random-access occasions of a radio frame.
        # Default timings give k = 1 (Msg2 one VF after Msg1).
        a = c.rao_per_frame
        k = math.ceil(((a - 1) * c.vf_duration + c.preamble_proc_delay)
                      / (c.vf_duration * a))
    crt = math.ceil(c.contention_resolution_window / c.vf_duration)
    backoff = math.ceil(c.backoff_window / c.vf_duration)
    n_rar = _rar_capacity(c)
    # Contention-free pipeline: Msg1 at the paging VF, Msg2 k VFs later,
    # Msg3 one VF after Msg2, Msg4 one VF after Msg3.
    pipeline = k + 2
    dl_for_ptm = max(c.dl_budget_per_vf - c.rar_cost, 1)
    ptm_tx = math.ceil(c.multicast_payload / dl_for_ptm)
    if c.scheme == "SP":
        group, interval = c.sp_group_size, 1
    elif c.scheme == "GP":
        group, interval = max(c.num_devices, 1), 0
    elif c.scheme == "eGP":
        group = c.egp_group_size
        interval = math.ceil(c.egp_interval_ms / c.vf_duration)
    else:  # NeGP
        group, interval = n_rar, pipeline + ptm_tx
    return DerivedQuantities(
        msg2_wait_vfs=k,
        crt_vfs=crt,
        backoff_vfs=backoff,
        rar_capacity=n_rar,
        group_size=group,
        paging_interval_vfs=interval,
        ra_pipeline_vfs=pipeline,
        ptm_tx_vfs=ptm_tx,
        first_ptm_offset_vfs=pipeline + 1,
    )


# -- scenario file / override plumbing ---------------------------------------

def _coerce(field: dataclasses.Field, raw: str):
    if field.name == "horizon":
        return raw if raw == "auto" else int(raw)
    if field.name == "msg2_wait_vfs":
        return None if raw.lower() == "none" else int(raw)
    if field.name == "msg_tx_times":
        return tuple(float(x) for x in raw.split(","))
    if field.type in ("int", int):
        return int(raw)
    if field.type in ("float", float):
        return float(raw)
    return raw


def apply_overrides(values: dict, overrides: list[str]) -> dict:
    """Apply repeatable CLI ``--set key=value`` pairs onto raw scenario values."""
    fields = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    out = dict(values)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise InvalidParameter(f"override {item!r} is not of the form key=value")
        if key not in fields:
            raise InvalidParameter(f"unknown scenario parameter {key!r}")
        out[key] = _coerce(fields[key], raw)
    return out


def load_scenario(path: str, overrides: list[str] | None = None) -> ScenarioConfig:
    """Read a JSON scenario file, apply overrides, validate."""
    with open(path) as fh:
        values = json.load(fh)
    if not isinstance(values, dict):
        raise InvalidParameter("scenario file must contain a JSON object")
    fields = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(values) - fields
    if unknown:
        raise InvalidParameter(f"unknown scenario keys: {sorted(unknown)}")
    values = apply_overrides(values, overrides or [])
    if isinstance(values.get("msg_tx_times"), list):
        values["msg_tx_times"] = tuple(values["msg_tx_times"])
    return validate(ScenarioConfig(**values))


def make_config(**kwargs) -> ScenarioConfig:
    """Validated config from keyword overrides of the defaults."""
    return validate(ScenarioConfig(**kwargs))

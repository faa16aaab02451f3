"""SC-PTM multicast scheduling over a finished protocol trace.

Transmissions sit on a grid spaced by the critical interval, offset so the
first paging subgroup has completed its handshake. A grid slot is executed
only when it has members: every device (or unit of expected mass) that
completed Msg4 before the slot's start and is not yet served. The payload
drains against the DL left over after the control messages of each VF.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .config import HARD_HORIZON_CAP, DerivedQuantities, ScenarioConfig
from .trace import HorizonExceeded, ProtocolTrace


def drain_payload(residual: float, dl_available: float) -> float:
    """One VF of payload drain: what remains afterwards."""
    if residual > dl_available:
        return residual - dl_available
    return 0.0


@dataclass(frozen=True)
class PtmTransmission:
    index: int                  # 1-based over executed transmissions
    start_vf: int
    duration_vfs: int
    members: np.ndarray         # per paging subgroup
    residuals: tuple[float, ...]  # payload left after each VF of the transmission

    @property
    def end_vf(self) -> int:
        return self.start_vf + self.duration_vfs - 1


@dataclass
class PtmSchedule:
    transmissions: list[PtmTransmission]
    critical_interval_vfs: int
    payload: float
    drain: np.ndarray           # DL RBs spent on multicast per VF
    unserved: float             # connected mass never assigned (should be ~0)

    @property
    def num_transmissions(self) -> int:
        return len(self.transmissions)

    @property
    def last_end_vf(self) -> int:
        return self.transmissions[-1].end_vf if self.transmissions else 0

    def members_matrix(self, num_subgroups: int) -> np.ndarray:
        """(S, Q) member counts per executed transmission."""
        if not self.transmissions:
            return np.zeros((0, num_subgroups))
        return np.stack([t.members for t in self.transmissions])

    def dump_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["# scptmlab-schedule v1"])
            writer.writerow(["s", "start_vf", "duration_vfs", "members"])
            for t in self.transmissions:
                writer.writerow([t.index, t.start_vf, t.duration_vfs,
                                 f"{t.members.sum():.9g}"])


def schedule(trace: ProtocolTrace, config: ScenarioConfig,
             derived: DerivedQuantities) -> PtmSchedule:
    """Place and drain every multicast transmission needed by the trace."""
    conn = trace.msg4_success
    z = config.critical_interval
    payload = float(config.multicast_payload)
    d0 = float(config.dl_budget_per_vf)
    # A transmission is executed only when at least half a device is pending:
    # the expected-value analog of the simulator's >=1-device execution rule.
    # Without it, vanishing analytic mass tails would execute empty slots.
    member_floor = 0.5

    total = float(conn.sum())
    paged_rows = np.nonzero(trace.alpha[:, 1, :].sum(axis=1) > 0)[0]
    if total <= member_floor or paged_rows.size == 0:
        return PtmSchedule([], z, payload, np.zeros(trace.alpha.shape[0]), total)

    first_paging_vf = int(paged_rows[0])
    start = first_paging_vf + derived.first_ptm_offset_vfs

    def dl_available(vf: int) -> float:
        if vf <= trace.ra_end_vf:
            return float(trace.dl_leftover[vf])
        return d0

    drain_ledger: dict[int, float] = {}
    txs: list[PtmTransmission] = []
    collected_upto = 0          # completions in VFs < this are assigned
    assigned = 0.0
    candidate = start
    while assigned < total - member_floor:
        if candidate > HARD_HORIZON_CAP:
            raise HorizonExceeded("multicast schedule exceeded the horizon cap")
        hi = min(candidate, conn.shape[0])
        members = conn[collected_upto:hi].sum(axis=0)
        mass = float(members.sum())
        if mass <= member_floor:
            candidate += z
            continue
        collected_upto = hi
        # Drain the payload VF by VF from the start of this slot.
        residual = payload
        residuals = []
        length = 0
        while residual > 0.0:
            avail = dl_available(candidate + length) - drain_ledger.get(candidate + length, 0.0)
            spent = min(residual, avail)
            drain_ledger[candidate + length] = drain_ledger.get(candidate + length, 0.0) + spent
            residual = drain_payload(residual, avail)
            residuals.append(residual)
            length += 1
            if length > HARD_HORIZON_CAP:
                raise HorizonExceeded("payload drain exceeded the horizon cap")
        assigned += mass
        txs.append(PtmTransmission(len(txs) + 1, candidate, length,
                                   members.astype(float), tuple(residuals)))
        candidate = max(candidate + z, candidate + length)

    size = max(trace.alpha.shape[0],
               (max(drain_ledger) + 1) if drain_ledger else 0)
    drain = np.zeros(size)
    for vf, spent in drain_ledger.items():
        drain[vf] = spent
    return PtmSchedule(txs, z, payload, drain, total - assigned)

"""Paging plan construction: who is paged, in which virtual frame.

Each scheme splits the N devices into subgroups of at most its group size and
pages one subgroup per paging VF at the scheme's cadence. The plan is the
paging matrix in sparse form: subgroup q of size n_q is paged at VF I_j[q].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .config import DerivedQuantities, ScenarioConfig


@dataclass(frozen=True)
class PagingPlan:
    scheme: str
    group_sizes: tuple[int, ...]        # n_q, summing to N
    paging_vfs: tuple[int, ...]         # I_j, strictly increasing, 1-based
    num_subgroups: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "num_subgroups", len(self.group_sizes))

    @property
    def num_devices(self) -> int:
        return int(sum(self.group_sizes))

    def matrix(self, horizon: int | None = None) -> np.ndarray:
        """Dense paging matrix P with P[i, q] devices paged at VF i (1-based rows)."""
        last = self.paging_vfs[-1] if self.paging_vfs else 0
        rows = (horizon if horizon is not None else last) + 1
        mat = np.zeros((rows, self.num_subgroups))
        for q, (vf, n) in enumerate(zip(self.paging_vfs, self.group_sizes)):
            if vf < rows:
                mat[vf, q] = n
        return mat

    def dump_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["vf_index", "subgroup", "devices"])
            for q, (vf, n) in enumerate(zip(self.paging_vfs, self.group_sizes)):
                writer.writerow([vf, q + 1, n])


def build_plan(config: ScenarioConfig, derived: DerivedQuantities) -> PagingPlan:
    """Split devices into paging subgroups at the scheme's cadence.

    The final subgroup carries the remainder N mod N_j; it keeps the regular
    cadence (no interval shortening), so the SC-PTM schedule stays periodic.
    """
    n = config.num_devices
    if n == 0:
        return PagingPlan(config.scheme, (), ())
    size = derived.group_size
    interval = max(derived.paging_interval_vfs, 1)
    num_groups = -(-n // size)
    sizes = [size] * num_groups
    if n % size:
        sizes[-1] = n % size
    vfs = [1 + q * interval for q in range(num_groups)]
    return PagingPlan(config.scheme, tuple(sizes), tuple(vfs))

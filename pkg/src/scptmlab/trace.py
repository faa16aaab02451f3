"""Run traces shared by the analytic and Monte Carlo engines.

Both engines emit the same per-VF ledgers, so the metrics and scheduling
stages are engine-agnostic. VF axis is 1-based (row 0 unused); attempt axis
holds attempts 1..R at indices 1..R and terminal failures at index R+1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class EmptyTrace(ValueError):
    """Raised by metrics when the trace carries no paged devices."""


class HorizonExceeded(RuntimeError):
    """The run did not settle within the hard horizon cap."""


@dataclass
class ProtocolTrace:
    provenance: str                 # 'analytic' or 'montecarlo'
    num_subgroups: int
    max_attempts: int               # R: last real attempt index
    ra_end_vf: int                  # last VF with RA activity
    truncated: bool
    alpha: np.ndarray               # (L, R+2, Q) contenders per attempt
    alpha_star: np.ndarray          # (L, R+2, Q) Msg2 successes (at reception VF)
    msg2_failures: np.ndarray       # (L, R+2, Q) RAR-capacity misses (at Msg1 VF)
    msg3_exposure: np.ndarray       # (L, R+2, Q) Msg3-collision base counts
    msg4_success: np.ndarray        # (L, Q) completions per VF
    failures: np.ndarray            # (L, Q) terminal failures per VF
    p: np.ndarray                   # (L,) singleton probability per VF
    c_used: np.ndarray              # (L,) expected/actual distinct preambles
    ul_leftover: np.ndarray         # (L,) UL RBs left after Msg3
    dl_leftover: np.ndarray         # (L,) DL RBs left after Msg2+Msg4 (pre-PTM)
    beta_tot: np.ndarray            # (L, R+2) Msg3 queue, summed over subgroups
    beta_star_tot: np.ndarray       # (L, R+2) Msg3 transmissions
    gamma_tot: np.ndarray           # (L, R+2) Msg4 queue (all CRT stages)
    gamma_star_tot: np.ndarray      # (L, R+2) Msg4 deliveries

    @property
    def num_vfs(self) -> int:
        return self.alpha.shape[0] - 1

    def total_paged(self) -> float:
        return float(self.alpha[:, 1, :].sum())

    def total_connected(self) -> float:
        return float(self.msg4_success.sum())

    def total_failed(self) -> float:
        return float(self.failures.sum())

    def connected_per_vf(self) -> np.ndarray:
        """(L, Q) completions; alias that reads better at call sites."""
        return self.msg4_success

    def dump_csv(self, path: str) -> None:
        """One row per (vf, attempt) with state aggregates and VF scalars."""
        r_max = self.max_attempts + 1
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["# scptmlab-trace v1"])
            writer.writerow([
                "vf", "attempt", "contenders", "msg2_ok", "msg3_queue",
                "msg3_tx", "msg4_queue", "msg4_ok", "p_singleton",
                "preambles_used", "ul_leftover", "dl_leftover",
            ])
            for i in range(1, self.ra_end_vf + 1):
                for r in range(1, r_max + 1):
                    writer.writerow([
                        i, r,
                        f"{self.alpha[i, r].sum():.9g}",
                        f"{self.alpha_star[i, r].sum():.9g}",
                        f"{self.beta_tot[i, r]:.9g}",
                        f"{self.beta_star_tot[i, r]:.9g}",
                        f"{self.gamma_tot[i, r]:.9g}",
                        f"{self.gamma_star_tot[i, r]:.9g}",
                        f"{self.p[i]:.9g}",
                        f"{self.c_used[i]:.9g}",
                        f"{self.ul_leftover[i]:.9g}",
                        f"{self.dl_leftover[i]:.9g}",
                    ])

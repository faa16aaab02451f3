"""Monte Carlo ensembles: independent replications with aggregate statistics.

Replication r of a run with base seed s draws its randomness from
SeedSequence([s, r]), so ensembles are reproducible and replications are
mutually independent streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DerivedQuantities, ScenarioConfig
from .mc import run_replication
from .metrics import METRIC_COLUMNS, MetricsReport, compute_report
from .paging import PagingPlan
from .scheduler import schedule


@dataclass
class EnsembleResult:
    num_replications: int
    base_seed: int
    mean: dict[str, float]
    half_ci95: dict[str, float]
    reports: list[MetricsReport]

    def summary_lines(self) -> list[str]:
        lines = []
        for name in METRIC_COLUMNS:
            lines.append(f"{name}: {self.mean[name]:.6g} "
                         f"+/- {self.half_ci95[name]:.3g} (95% CI)")
        return lines


def replication_seed(base_seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([base_seed, rep]).generate_state(1)[0])


def run_ensemble(config: ScenarioConfig, derived: DerivedQuantities,
                 plan: PagingPlan, num_reps: int, base_seed: int) -> EnsembleResult:
    reports: list[MetricsReport] = []
    for rep in range(num_reps):
        mc = run_replication(config, derived, plan, replication_seed(base_seed, rep))
        sched = schedule(mc.trace, config, derived)
        reports.append(compute_report(mc.trace, sched, plan, config, derived))

    mean: dict[str, float] = {}
    half: dict[str, float] = {}
    for name in METRIC_COLUMNS:
        vals = np.array([r.values()[name] for r in reports], dtype=float)
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            mean[name], half[name] = math.nan, math.nan
            continue
        mean[name] = float(vals.mean())
        if vals.size > 1:
            half[name] = 1.96 * float(vals.std(ddof=1)) / math.sqrt(vals.size)
        else:
            half[name] = 0.0
    return EnsembleResult(num_reps, base_seed, mean, half, reports)

"""Performance laboratory for group paging with SC-PTM multicast delivery.

Two engines over one trace schema: a deterministic expected-value recursion
(:mod:`scptmlab.fluid`) and a seeded per-device Monte Carlo simulator
(:mod:`scptmlab.mc`), both feeding the multicast scheduler and metric set.
"""

from .config import (DerivedQuantities, InvalidParameter, ScenarioConfig,
                     SCHEMES, derive, load_scenario, make_config, validate)
from .contention import (ContendersZero, expected_used_preambles,
                         occupancy_distribution, round_half_away,
                         singleton_probability)
from .ensemble import EnsembleResult, run_ensemble
from .fluid import run_fluid
from .mc import McTrace, run_replication
from .metrics import METRIC_COLUMNS, MetricsReport, compute_report
from .paging import PagingPlan, build_plan
from .scheduler import PtmSchedule, PtmTransmission, drain_payload, schedule
from .trace import EmptyTrace, HorizonExceeded, ProtocolTrace

__all__ = [
    "DerivedQuantities", "InvalidParameter", "ScenarioConfig", "SCHEMES",
    "derive", "load_scenario", "make_config", "validate",
    "ContendersZero", "expected_used_preambles", "occupancy_distribution",
    "round_half_away", "singleton_probability",
    "EnsembleResult", "run_ensemble",
    "run_fluid",
    "McTrace", "run_replication",
    "METRIC_COLUMNS", "MetricsReport", "compute_report",
    "PagingPlan", "build_plan",
    "PtmSchedule", "PtmTransmission", "drain_payload", "schedule",
    "EmptyTrace", "HorizonExceeded", "ProtocolTrace",
]

__version__ = "0.1.0"

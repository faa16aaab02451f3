import pathlib

import pytest

from scptmlab import build_plan, compute_report, derive, make_config
from scptmlab.fluid import run_fluid
from scptmlab.mc import run_replication
from scptmlab.scheduler import schedule

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
SCENARIO = REPO_ROOT / "scenarios" / "table1.json"


@pytest.fixture
def scenario_path() -> str:
    return str(SCENARIO)


def make_fluid_report(**overrides):
    cfg = make_config(**overrides)
    d = derive(cfg)
    plan = build_plan(cfg, d)
    trace = run_fluid(cfg, d, plan)
    sched = schedule(trace, cfg, d)
    return compute_report(trace, sched, plan, cfg, d)


def make_mc_report(seed: int = 0, **overrides):
    cfg = make_config(**overrides)
    d = derive(cfg)
    plan = build_plan(cfg, d)
    mc = run_replication(cfg, d, plan, seed)
    sched = schedule(mc.trace, cfg, d)
    return compute_report(mc.trace, sched, plan, cfg, d)


@pytest.fixture
def fluid_report():
    return make_fluid_report


@pytest.fixture
def mc_report():
    return make_mc_report

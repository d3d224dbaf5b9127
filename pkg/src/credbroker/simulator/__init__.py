"""Scenario simulator: CI jobs and secrets under access anti-patterns
versus the brokered model, with comparable security metrics."""

from .engine import run_scenario
from .report import report
from .scenarios import (
    Scenario,
    ScenarioError,
    ScenarioMetrics,
    SimJob,
    builtin_names,
    load_builtin,
    load_scenario,
)

__all__ = [
    "Scenario",
    "ScenarioError",
    "ScenarioMetrics",
    "SimJob",
    "builtin_names",
    "load_builtin",
    "load_scenario",
    "report",
    "run_scenario",
]

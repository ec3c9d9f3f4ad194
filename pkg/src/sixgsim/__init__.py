"""Discrete-event simulator of multi-domain, multi-access 6G service orchestration."""

from .kernel import Kernel, RngStream, SchedulingInPast
from .kpi import KpiRequirementSet
from .scenario import Scenario, load_scenario
from .sim import RunReport, Simulation, run

__all__ = [
    "Kernel", "RngStream", "SchedulingInPast", "KpiRequirementSet",
    "Scenario", "load_scenario", "RunReport", "Simulation", "run",
]
__version__ = "0.1.0"

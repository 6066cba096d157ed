"""Discrete-event simulator comparing a baseline cloud load balancer with a
migration-based cloud manager that avoids deadlocked VMs."""

from importlib import resources
from pathlib import Path

from .engine import EngineAbort, Simulation, run
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario, serialize_scenario

__all__ = [
    "EngineAbort",
    "Scenario",
    "ScenarioError",
    "Simulation",
    "bundled_scenario",
    "load_scenario",
    "parse_scenario",
    "run",
    "serialize_scenario",
]


def bundled_scenario(name: str = "tables23.scn") -> Path:
    """Path to a scenario file shipped with the package."""
    return Path(str(resources.files(__package__) / "scenarios" / name))

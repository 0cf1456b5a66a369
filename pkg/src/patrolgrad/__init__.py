"""Threshold-based persistent monitoring on graphs with event-driven gradient estimation."""

from .scenario import (MissionSpec, ScenarioError, bundled, load_scenario, make_mission,
                       random_mission, read_scenario)
from .hybrid_sim import SimResult, simulate, visiting_sequence
from .ipa import GradResult, SingularGuardError, grad_J

__version__ = "0.1.0"

__all__ = [
    "MissionSpec", "ScenarioError", "bundled", "load_scenario", "make_mission",
    "random_mission", "read_scenario", "SimResult", "simulate", "visiting_sequence",
    "GradResult", "SingularGuardError", "grad_J",
]

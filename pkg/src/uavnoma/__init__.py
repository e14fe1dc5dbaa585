"""Max-min rate resource allocation for a single-antenna UAV base station.

Path-following (successive inner convexification) solvers for NOMA, DPC and
two OMA variants, jointly optimizing bandwidth split, power split, squared
altitude and squared beamwidth.
"""

from uavnoma.scenario import (
    Scenario,
    ScenarioParams,
    generate_scenario,
    validate_scenario,
)
from uavnoma.model import DesignPoint, RateBreakdown, SchemeKind, objective, to_mbps
from uavnoma.sca import ScaOptions, SolveReport, initialize, run

__all__ = [
    "DesignPoint",
    "RateBreakdown",
    "ScaOptions",
    "Scenario",
    "ScenarioParams",
    "SchemeKind",
    "SolveReport",
    "generate_scenario",
    "initialize",
    "objective",
    "run",
    "to_mbps",
    "validate_scenario",
]

__version__ = "0.1.0"

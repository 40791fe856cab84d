"""Coordinating guiding vector fields for distributed multi-robot path following."""

from . import control, field, graph, paths, safety, sim
from .errors import (
    CollisionStateError,
    DivergenceError,
    InfeasibleCorrectionError,
    LyapunovNotApplicableError,
    MissingNeighborError,
    PlanarDegeneracyError,
    ScenarioValidationError,
    SimulationError,
)
from .field import GainSet
from .graph import CommGraph, OffsetSpec
from .paths import ParametricPath
from .sim import Scenario, Trace

__version__ = "0.1.0"

__all__ = [
    "CommGraph",
    "CollisionStateError",
    "DivergenceError",
    "GainSet",
    "InfeasibleCorrectionError",
    "LyapunovNotApplicableError",
    "MissingNeighborError",
    "OffsetSpec",
    "ParametricPath",
    "PlanarDegeneracyError",
    "Scenario",
    "ScenarioValidationError",
    "SimulationError",
    "Trace",
    "control",
    "field",
    "graph",
    "paths",
    "safety",
    "sim",
]

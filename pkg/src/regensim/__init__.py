"""Regenerative steady-state simulation of multiclass queueing networks."""

__version__ = "0.1.0"

from .decomp import Decomposition, LambdaChoice, build_decomposition, sample_G, sample_interarrival
from .engine import Simulation, SimState, StateFunctional
from .network import NetworkConfig, load_config, shipped_config, solve_traffic, validate_assumptions
from .regen import Detector, RegenMode
from .stats import EstimatorAccumulator, Report

__all__ = [
    "Decomposition",
    "Detector",
    "EstimatorAccumulator",
    "LambdaChoice",
    "NetworkConfig",
    "RegenMode",
    "Report",
    "SimState",
    "Simulation",
    "StateFunctional",
    "build_decomposition",
    "load_config",
    "sample_G",
    "sample_interarrival",
    "shipped_config",
    "solve_traffic",
    "validate_assumptions",
]

"""Predictor-feedback CACC for heterogeneous platoons with actuation delay.

Simulation of the sampled platoon, the discrete predictor controller, the
lifted closed-loop stability test and continuous reference closed loops.
"""
from predcacc._backend import NAME as BACKEND
from predcacc.core import (
    GainSet,
    LeaderProfile,
    ScenarioConfig,
    Timing,
    VehicleParams,
    VehicleState,
    load_scenario,
    validate_params,
)
from predcacc.simlab import response_metrics, run_platoon_sim, run_reference_closed_loop
from predcacc.stability import (
    LoopParams,
    build_lifted_system,
    gain_scan,
    stability_report,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "GainSet",
    "LeaderProfile",
    "LoopParams",
    "ScenarioConfig",
    "Timing",
    "VehicleParams",
    "VehicleState",
    "build_lifted_system",
    "gain_scan",
    "load_scenario",
    "response_metrics",
    "run_platoon_sim",
    "run_reference_closed_loop",
    "stability_report",
    "validate_params",
]

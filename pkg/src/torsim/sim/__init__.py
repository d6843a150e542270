from .allocation import BACKEND, max_min_allocate
from .engine import (
    CircuitPath,
    MetricsRecord,
    Simulation,
    SimulationError,
    build_circuit,
    path_rtt,
    relay_goodput_series,
    run,
)

__all__ = [
    "BACKEND",
    "max_min_allocate",
    "CircuitPath",
    "MetricsRecord",
    "Simulation",
    "SimulationError",
    "build_circuit",
    "path_rtt",
    "relay_goodput_series",
    "run",
]

"""Resolvents, simulation and steering controls for the heat equation with singular memory."""

__version__ = "0.1.0"

from .control import (
    ControlOperator,
    ControlSignal,
    Gramian,
    Nonlinearity,
    SteeringProblem,
    SteeringResult,
    assemble_gramian,
    closed_loop_picard,
    control_operator_matrix,
    duality_map,
    regularized_resolvent,
    synthesize_control,
)
from .resolvent import MemoryKernel, ResolventTable, SpectralSystem, TableRoute, build_resolvent_table
from .volterra import TimeGrid, Trajectory, mild_quadrature, simulate_semilinear, step_linear_mode

__all__ = [
    "ControlOperator",
    "ControlSignal",
    "Gramian",
    "MemoryKernel",
    "Nonlinearity",
    "ResolventTable",
    "SpectralSystem",
    "SteeringProblem",
    "SteeringResult",
    "TableRoute",
    "TimeGrid",
    "Trajectory",
    "assemble_gramian",
    "build_resolvent_table",
    "closed_loop_picard",
    "control_operator_matrix",
    "duality_map",
    "mild_quadrature",
    "regularized_resolvent",
    "simulate_semilinear",
    "step_linear_mode",
    "synthesize_control",
]

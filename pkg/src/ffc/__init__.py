"""Nonlinear Finsler connections for metrics written in a moving frame."""

from .connection import (
    ConnectionData,
    berwald_general,
    berwald_simple,
    connection_at,
    constraints,
    holonomic_oracle,
    nonlinear_connection,
    verify,
)
from .errors import FinslerError
from .expr import parse
from .frame import Chart, frame_point, structure_coefficients
from .geodesic import IntegrationConfig, el_residual, initial_state, integrate
from .metric import FinslerMetric, analyze, homogeneity_check

__all__ = [
    "Chart",
    "ConnectionData",
    "FinslerError",
    "FinslerMetric",
    "IntegrationConfig",
    "analyze",
    "berwald_general",
    "berwald_simple",
    "connection_at",
    "constraints",
    "el_residual",
    "frame_point",
    "holonomic_oracle",
    "homogeneity_check",
    "initial_state",
    "integrate",
    "nonlinear_connection",
    "parse",
    "structure_coefficients",
    "verify",
]
__version__ = "0.1.0"

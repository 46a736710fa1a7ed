"""Krasovskii passivity-based control toolkit (Python bindings)."""

import json

from ._krasov import (
    AssumptionConfig,
    AssumptionError,
    Box,
    ControlAffineModel,
    ControllerGains,
    Error,
    HvacTwoZoneParams,
    InfeasibleSetpointError,
    IntegrabilityError,
    ParseError,
    SimulationConfig,
    SingularityError,
    alpha,
    annihilator,
    audit_closed_loop,
    beta,
    equilibrium_state_for_input,
    g_time_derivative,
    hvac_default_scenario,
    hvac_equilibrium_state,
    hvac_model,
    linear_model,
    load_scenario,
    output_y,
    potential_gamma,
    potential_via_path,
    rlc_series,
    rlc_two_mesh,
    simulate_closed_loop,
    simulate_prolonged,
    solve_equilibrium_input,
    u_dot,
    xdot,
)
from ._krasov import _check_all_json


def check_all(model, config=None):
    """Sampled check of the three structural assumptions; returns the JSON report as a dict."""
    if config is None:
        config = AssumptionConfig()
    return json.loads(_check_all_json(model, config))


__version__ = "0.1.0"

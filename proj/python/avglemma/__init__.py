"""Numerical checks for velocity averaging lemmas (compiled core in ``_avglemma``)."""

import json as _json

from ._avglemma import (  # noqa: F401
    B_primitive,
    ConfigError,
    Error,
    cbar_constant,
    chi,
    compare_exponents,
    fit_alpha,
    gamma_opt,
    m0_eval,
    m0_jet,
    oscillatory_integral,
    series_check,
    subcommands,
    sublevel_measure,
    vdc_constant,
)
from ._avglemma import run_scenario as _run_scenario


def run_scenario(command, config):
    """Run a scenario from a dict; returns (report dict, passed)."""
    text, passed = _run_scenario(command, _json.dumps(config))
    return _json.loads(text), passed

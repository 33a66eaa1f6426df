"""Python access to the lyapcert core.

Configs are plain dicts with the same layout as the JSON presets.
"""

import json

from . import _core
from ._core import (
    InputError,
    NumericError,
    RegionSelectionFailure,
    forward,
    init_params,
    input_gradient,
    is_hurwitz,
    kleinman_lqr,
    loss,
    maml_scalar_quadratic,
    preset_names,
    solve_lyapunov,
)

__all__ = [
    "InputError",
    "NumericError",
    "RegionSelectionFailure",
    "compare",
    "config_hash",
    "forward",
    "init_params",
    "input_gradient",
    "is_hurwitz",
    "kleinman_lqr",
    "load_preset",
    "loss",
    "maml_scalar_quadratic",
    "normalize_config",
    "preset_names",
    "qlf",
    "solve_lyapunov",
]


def load_preset(name):
    return json.loads(_core.load_preset(name))


def normalize_config(config):
    return json.loads(_core.normalize_config(json.dumps(config)))


def config_hash(config):
    return _core.config_hash(json.dumps(config))


def qlf(config):
    return json.loads(_core.qlf(json.dumps(config)))


def compare(config):
    return json.loads(_core.compare(json.dumps(config)))

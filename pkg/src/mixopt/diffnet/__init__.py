"""Array autodiff tape, dense networks, Adam, and the checkpoint codec."""

from .adam import AdamState, adam_step, init_adam
from .checkpoint import load_params, save_params
from .network import (
    ACTIVATIONS,
    InputNorm,
    NetworkSpec,
    ParameterSet,
    forward,
    init_params,
    net_apply,
    param_gradient,
    spatial_jacobian,
)
from . import tape

__all__ = [
    "ACTIVATIONS",
    "AdamState",
    "InputNorm",
    "NetworkSpec",
    "ParameterSet",
    "adam_step",
    "forward",
    "init_adam",
    "init_params",
    "load_params",
    "net_apply",
    "param_gradient",
    "save_params",
    "spatial_jacobian",
    "tape",
]

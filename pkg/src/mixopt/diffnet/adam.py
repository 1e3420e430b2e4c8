"""Adam with bias correction, as a pure step function on flat parameters."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import DomainError, NumericalError
from .network import ParameterSet


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int
    lr: float
    beta1: float
    beta2: float
    eps: float


def init_adam(n: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    if n < 1:
        raise DomainError("parameter count must be >= 1")
    if lr <= 0 or not (0.0 <= beta1 < 1.0) or not (0.0 <= beta2 < 1.0) or eps <= 0:
        raise DomainError("invalid Adam hyperparameters")
    return AdamState(m=np.zeros(n), v=np.zeros(n), step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: ParameterSet, grad: np.ndarray, state: AdamState):
    """One update; returns (new params, new state) without mutating inputs.

    Refuses to step on a non-finite gradient.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.flat.shape:
        raise DomainError(f"gradient shape {grad.shape} does not match parameters {params.flat.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_flat = params.flat - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params.with_flat(new_flat), replace(state, m=m, v=v, step=t)

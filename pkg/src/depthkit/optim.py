"""Adam with decoupled weight decay and the linear learning-rate schedule."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from depthkit.exceptions import ConfigError
from depthkit.params import Parameter


@dataclass
class AdamState:
    """First and second moments per parameter name plus the step count."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Sequence[Parameter],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    weight_decay: float = 0.01,
    eps: float = 1e-8,
) -> None:
    """One Adam update with decoupled weight decay, in place.

    Parameters without a gradient are left untouched.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be > 0, got {lr}")
    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step

    for param in params:
        grad = param.grad
        if grad is None:
            continue
        m = state.m.get(param.name)
        if m is None:
            m = state.m[param.name] = np.zeros_like(param.data)
            state.v[param.name] = np.zeros_like(param.data)
        v = state.v[param.name]

        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad

        if weight_decay:
            param.data -= lr * weight_decay * param.data
        update = (m / correction1) / (np.sqrt(v / correction2) + eps)
        param.data -= (lr * update).astype(param.dtype, copy=False)


def linear_lr(step: int, total: int, lr_start: float, lr_end: float) -> float:
    """Learning rate at ``step`` of ``total`` decaying linearly to ``lr_end``."""
    if total <= 0:
        return lr_start
    fraction = min(max(step / total, 0.0), 1.0)
    return lr_start + (lr_end - lr_start) * fraction

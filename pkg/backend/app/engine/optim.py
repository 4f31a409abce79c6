from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..core.errors import ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class CosineSchedule:
    lr0: float = 4e-4
    eta_min: float = 0.0
    t_max: int = 1

    def __call__(self, t: int) -> float:
        return cosine_lr(self, t)


def cosine_lr(sched: CosineSchedule, t: int) -> float:
    if sched.t_max <= 0:
        return sched.lr0
    t = min(max(t, 0), sched.t_max)
    return sched.eta_min + (sched.lr0 - sched.eta_min) * (1.0 + math.cos(math.pi * t / sched.t_max)) / 2.0


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: AdamState,
    lr: float | None = None,
) -> AdamState:
    """Bias-corrected Adam update, applied in place to ``params``.

    A missing gradient counts as zero. ``lr`` overrides ``state.lr`` for this
    step (the schedule drives it during training).
    """
    state.step += 1
    step_lr = state.lr if lr is None else lr
    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step

    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        elif grad.shape != param.shape:
            raise ShapeError(f"adam_step: gradient for {name} has shape {grad.shape}, expected {param.shape}")

        m = state.m.get(name)
        v = state.v.get(name)
        if m is None or v is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)

        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name] = m.astype(param.data.dtype)
        state.v[name] = v.astype(param.data.dtype)

        m_hat = m / bias1
        v_hat = v / bias2
        update = step_lr * m_hat / (np.sqrt(v_hat) + state.eps)
        param.data = (param.data - update).astype(param.data.dtype)

    return state

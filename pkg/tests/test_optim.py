import math

import numpy as np
import pytest

from backend.app.core.errors import ShapeError
from backend.app.engine import AdamState, CosineSchedule, Tensor, adam_step, cosine_lr, precision


def _param(value: float) -> Tensor:
    with precision("float64"):
        return Tensor(np.full((1, 1, 1, 1), value))


def test_adam_first_step_moves_by_learning_rate() -> None:
    p = _param(0.0)
    state = adam_step({"w": p}, {"w": np.ones((1, 1, 1, 1))}, AdamState(lr=1e-3))
    assert state.step == 1
    assert p.item() == pytest.approx(-9.99999e-4, rel=1e-5)


def test_adam_two_steps_constant_gradient() -> None:
    p = _param(0.0)
    state = AdamState(lr=1e-3)
    g = {"w": np.full((1, 1, 1, 1), 0.5)}
    adam_step({"w": p}, g, state)
    adam_step({"w": p}, g, state)
    # with a constant gradient the bias-corrected ratio stays at one
    assert p.item() == pytest.approx(-2e-3, rel=1e-5)
    assert state.m["w"].item() == pytest.approx(0.5 * (1 - 0.9**2))


def test_adam_zero_or_missing_gradient_keeps_parameter() -> None:
    p, q = _param(0.3), _param(-0.2)
    adam_step({"p": p, "q": q}, {"p": np.zeros((1, 1, 1, 1))}, AdamState())
    assert p.item() == 0.3
    assert q.item() == -0.2


def test_adam_lr_override_and_shape_check() -> None:
    p = _param(1.0)
    adam_step({"w": p}, {"w": -np.ones((1, 1, 1, 1))}, AdamState(lr=1e-3), lr=1e-2)
    assert p.item() == pytest.approx(1.01, rel=1e-6)
    with pytest.raises(ShapeError):
        adam_step({"w": p}, {"w": np.ones((1, 2, 1, 1))}, AdamState())


def test_cosine_schedule_values() -> None:
    sched = CosineSchedule(lr0=4e-4, eta_min=0.0, t_max=100)
    assert cosine_lr(sched, 0) == pytest.approx(4e-4)
    assert sched(50) == pytest.approx(2e-4)
    assert sched(100) == pytest.approx(0.0, abs=1e-18)
    assert sched(25) == pytest.approx(2e-4 * (1 + math.cos(math.pi / 4)))
    assert sched(250) == sched(100)


def test_cosine_schedule_is_monotone_and_floors_at_eta_min() -> None:
    sched = CosineSchedule(lr0=1e-3, eta_min=1e-5, t_max=40)
    values = [sched(t) for t in range(41)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(1e-5)
    assert CosineSchedule(lr0=1e-3, t_max=0)(10) == 1e-3

"""Dense NCHW tensors and the gradient tape.

A :class:`Tensor` is a thin wrapper around a 4-D numpy array. Operations in
:mod:`backend.app.engine.ops` append a :class:`Node` to the active
:class:`Tape` (if one is open via :func:`recording`) so that
:meth:`Tape.backward` can replay them in reverse order.

Production graphs run in float32; :func:`precision` switches the current
thread to float64 for finite-difference gradient checks.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from ..core.errors import NonFiniteError, ShapeError


_local = threading.local()

_DTYPES = {"float32": np.float32, "float64": np.float64}


def get_dtype() -> type[np.floating]:
    return getattr(_local, "dtype", np.float32)


def set_precision(name: str) -> None:
    if name not in _DTYPES:
        raise ValueError(f"Unknown precision {name!r}; expected one of {sorted(_DTYPES)}")
    _local.dtype = _DTYPES[name]


@contextmanager
def precision(name: str) -> Iterator[None]:
    previous = get_dtype()
    set_precision(name)
    try:
        yield
    finally:
        _local.dtype = previous


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data: np.ndarray | float | Sequence, requires_grad: bool = False) -> None:
        arr = np.ascontiguousarray(data, dtype=get_dtype())
        if arr.ndim != 4:
            raise ShapeError(f"Tensor expects a 4-D (N, C, H, W) array, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape: Tape | None = None

    @classmethod
    def scalar(cls, value: float, requires_grad: bool = False) -> "Tensor":
        return cls(np.full((1, 1, 1, 1), value), requires_grad=requires_grad)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def astype(self, name: str) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data.astype(_DTYPES[name])
        out.requires_grad = self.requires_grad
        out.grad = None
        out.tape = None
        return out

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward_fn: BackwardFn


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn) -> None:
        output.tape = self
        self.nodes.append(Node(op=op, inputs=inputs, output=output, backward_fn=backward_fn))

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if loss.tape is not self:
            raise ValueError("loss was not recorded on this tape")

        produced = {id(node.output) for node in self.nodes}
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}

        for node in reversed(self.nodes):
            upstream = grads.pop(id(node.output), None)
            if upstream is None:
                continue
            input_grads = node.backward_fn(upstream)
            for tensor, g in zip(node.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                if key not in produced:
                    leaves[key] = tensor

        for key, tensor in leaves.items():
            g = grads[key]
            tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g


def _active_tape() -> Tape | None:
    return getattr(_local, "tape", None)


@contextmanager
def recording() -> Iterator[Tape]:
    """Open a tape on the current thread; ops inside the block are recorded."""
    previous = _active_tape()
    tape = Tape()
    _local.tape = tape
    try:
        yield tape
    finally:
        _local.tape = previous


def backward(loss: Tensor) -> None:
    if loss.tape is None:
        raise ValueError("loss is not on a tape; run the forward pass inside recording()")
    loss.tape.backward(loss)


def check_finite(op: str, data: np.ndarray) -> None:
    if not np.isfinite(data).all():
        raise NonFiniteError(op, f"output shape {data.shape}")


def make_output(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    """Wrap an op result and record it when a tape is open and any input needs grad."""
    check_finite(op, data)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.tape = None
    tape = _active_tape()
    out.requires_grad = tape is not None and any(t.requires_grad for t in inputs)
    if out.requires_grad:
        tape.record(op, inputs, out, backward_fn)  # type: ignore[union-attr]
    return out

"""Central finite-difference gradient checks in double precision."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import ops
from .tensor import Tensor, precision, recording


logger = logging.getLogger(__name__)

GraphFn = Callable[..., Tensor]

OP_TOLERANCE = 1e-4
NORM_TOLERANCE = 1e-3
REL_FLOOR = 1e-3


@dataclass
class GradCase:
    name: str
    build: Callable[[np.random.Generator], tuple[GraphFn, list[Tensor]]]
    tolerance: float = OP_TOLERANCE
    n_points: int = 10
    # False spreads n_points over all inputs instead of n_points per input
    per_input: bool = True


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def check_gradient(
    fn: GraphFn,
    inputs: Sequence[Tensor],
    rng: np.random.Generator,
    n_points: int = 10,
    eps: float = 1e-6,
    per_input: bool = True,
) -> float:
    """Return the worst relative error between tape and finite-difference gradients.

    The scalar objective is ``sum(fn(*inputs) * R)`` for a fixed random R.
    With ``per_input`` every grad-requiring input gets ``n_points`` sampled coordinates;
    otherwise ``n_points`` coordinates are spread over all inputs.
    """
    with precision("float64"):
        sample = fn(*inputs)
        projection = Tensor(rng.standard_normal(sample.shape))

        def objective() -> Tensor:
            return ops.sum_all(ops.mul(fn(*inputs), projection))

        for t in inputs:
            t.zero_grad()
        with recording() as tape:
            loss = objective()
        tape.backward(loss)

        targets = [t for t in inputs if t.requires_grad]
        points: list[tuple[Tensor, int]] = []
        if per_input:
            for t in targets:
                picks = rng.choice(t.data.size, size=min(n_points, t.data.size), replace=False)
                points.extend((t, int(i)) for i in picks)
        else:
            for _ in range(n_points):
                t = targets[int(rng.integers(len(targets)))]
                points.append((t, int(rng.integers(t.data.size))))

        worst = 0.0
        for t, index in points:
            flat = t.data.reshape(-1)
            original = flat[index]
            flat[index] = original + eps
            plus = objective().item()
            flat[index] = original - eps
            minus = objective().item()
            flat[index] = original
            numeric = (plus - minus) / (2.0 * eps)
            analytic = 0.0 if t.grad is None else float(t.grad.reshape(-1)[index])
            worst = max(worst, relative_error(analytic, numeric))
        return worst


def _param(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def op_cases() -> list[GradCase]:
    def conv(rng: np.random.Generator) -> tuple[GraphFn, list[Tensor]]:
        x, w, b = _param(rng, 2, 4, 6, 6), _param(rng, 6, 2, 3, 3), _param(rng, 1, 6, 1, 1)
        return (lambda x, w, b: ops.conv2d(x, w, b, stride=2, padding=1, groups=2)), [x, w, b]

    def dsc(rng: np.random.Generator) -> tuple[GraphFn, list[Tensor]]:
        x, dw, pw = _param(rng, 1, 4, 5, 5), _param(rng, 4, 1, 3, 3), _param(rng, 3, 4, 1, 1)
        return (lambda x, dw, pw: ops.depthwise_separable(x, dw, pw)), [x, dw, pw]

    def norm(rng: np.random.Generator) -> tuple[GraphFn, list[Tensor]]:
        x, g, b = _param(rng, 2, 4, 5, 5), _param(rng, 1, 4, 1, 1), _param(rng, 1, 4, 1, 1)
        return ops.instance_norm, [x, g, b]

    def unary(op: Callable[[Tensor], Tensor]) -> Callable[[np.random.Generator], tuple[GraphFn, list[Tensor]]]:
        return lambda rng: (op, [_param(rng, 2, 3, 4, 4)])

    def upsample(rng: np.random.Generator) -> tuple[GraphFn, list[Tensor]]:
        return (lambda x: ops.bilinear_upsample(x, 2)), [_param(rng, 1, 2, 3, 4)]

    def shuffle(rng: np.random.Generator) -> tuple[GraphFn, list[Tensor]]:
        return (lambda x: ops.pixel_shuffle(x, 2)), [_param(rng, 2, 8, 3, 3)]

    def shift(rng: np.random.Generator) -> tuple[GraphFn, list[Tensor]]:
        return (lambda x: ops.spatial_shift(x, 2, -1)), [_param(rng, 1, 2, 5, 5)]

    def maxpool(rng: np.random.Generator) -> tuple[GraphFn, list[Tensor]]:
        return ops.max_pool2d, [_param(rng, 2, 3, 6, 6)]

    def concat(rng: np.random.Generator) -> tuple[GraphFn, list[Tensor]]:
        a, b = _param(rng, 1, 2, 3, 3), _param(rng, 1, 3, 3, 3)
        return (lambda a, b: ops.concat_channels([a, b])), [a, b]

    def split(rng: np.random.Generator) -> tuple[GraphFn, list[Tensor]]:
        return (lambda x: ops.concat_channels(ops.split_channels(x, 4)[::-1])), [_param(rng, 1, 8, 3, 3)]

    def broadcast(op: Callable[[Tensor, Tensor], Tensor]) -> Callable[[np.random.Generator], tuple[GraphFn, list[Tensor]]]:
        return lambda rng: (op, [_param(rng, 2, 3, 4, 4), _param(rng, 2, 3, 1, 1)])

    def clamp(rng: np.random.Generator) -> tuple[GraphFn, list[Tensor]]:
        return (lambda x: ops.clamp(x, -0.5, 0.5)), [_param(rng, 1, 2, 4, 4)]

    def crop(rng: np.random.Generator) -> tuple[GraphFn, list[Tensor]]:
        return (lambda x: ops.crop_spatial(x, 3, 2)), [_param(rng, 1, 2, 4, 4)]

    def l1(rng: np.random.Generator) -> tuple[GraphFn, list[Tensor]]:
        return ops.l1_loss, [_param(rng, 2, 3, 4, 4), _param(rng, 2, 3, 4, 4)]

    return [
        GradCase("conv2d", conv),
        GradCase("depthwise_separable", dsc),
        GradCase("instance_norm", norm, tolerance=NORM_TOLERANCE),
        GradCase("gelu", unary(ops.gelu)),
        GradCase("sigmoid", unary(ops.sigmoid)),
        GradCase("bilinear_upsample", upsample),
        GradCase("pixel_shuffle", shuffle),
        GradCase("spatial_shift", shift),
        GradCase("global_avg_pool", unary(ops.global_avg_pool)),
        GradCase("max_pool2d", maxpool),
        GradCase("concat_channels", concat),
        GradCase("split_channels", split),
        GradCase("add", broadcast(ops.add)),
        GradCase("mul", broadcast(ops.mul)),
        GradCase("scale", unary(lambda x: ops.scale(x, -1.5))),
        GradCase("clamp", clamp),
        GradCase("crop_spatial", crop),
        GradCase("l1_loss", l1),
    ]


def run_case(case: GradCase, seed: int) -> float:
    rng = np.random.default_rng(seed)
    with precision("float64"):
        fn, inputs = case.build(rng)
    return check_gradient(fn, inputs, rng, n_points=case.n_points, per_input=case.per_input)

"""UVENet: shared encoder, per-scale feature alignment/aggregation, decoder and GRM.

All tensors are NCHW. A window of T frames is encoded frame by frame with the
same weights; the four feature scales (strides 4/8/16/32) are aligned with a
grouped spatial shift and aggregated (FAAM), decoded to a preliminary image
y', and finally colour-corrected by a global per-channel gain (GRM).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy.stats import truncnorm

from ..core.errors import CheckpointError, ShapeError
from ..engine import ops
from ..engine.checkpoint import read_tensors, write_tensors
from ..engine.tensor import Tensor, get_dtype
from ..models.network import Aggregation, ModelConfig


logger = logging.getLogger(__name__)

# (dx, dy) per channel slice, row-major over {-1, 0, 1}^2 without (0, 0)
SHIFT_PATTERNS: Tuple[Tuple[int, int], ...] = (
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
)

PAD_MULTIPLE = 32
SHUFFLE_FACTOR = 4
CA_REDUCTION = 16

FeaturePyramid = List[Tensor]
Manifest = List[Tuple[str, Tuple[int, int, int, int]]]


@dataclass
class FrameWindow:
    """A batch of temporal windows, ``frames`` shaped (N, T, 3, H, W) in [0, 1]."""

    frames: np.ndarray

    def __post_init__(self) -> None:
        if self.frames.ndim != 5 or self.frames.shape[2] != 3:
            raise ShapeError(f"FrameWindow expects (N, T, 3, H, W) frames, got {self.frames.shape}")
        if self.frames.shape[1] % 2 == 0:
            raise ShapeError(f"FrameWindow needs an odd number of frames, got {self.frames.shape[1]}")

    @classmethod
    def from_frames(cls, frames: Sequence[np.ndarray]) -> "FrameWindow":
        return cls(np.stack(frames)[None])

    @property
    def num_frames(self) -> int:
        return self.frames.shape[1]

    @property
    def center(self) -> int:
        return self.num_frames // 2

    @property
    def spatial(self) -> Tuple[int, int]:
        return self.frames.shape[3], self.frames.shape[4]

    def frame(self, index: int) -> Tensor:
        return Tensor(self.frames[:, index])

    def padded(self, multiple: int = PAD_MULTIPLE) -> "FrameWindow":
        h, w = self.spatial
        pad_h = (-h) % multiple
        pad_w = (-w) % multiple
        if not pad_h and not pad_w:
            return self
        pad = ((0, 0), (0, 0), (0, 0), (0, pad_h), (0, pad_w))
        return FrameWindow(np.pad(self.frames, pad, mode="reflect"))


@dataclass
class UVENetParams:
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def num_parameters(self) -> int:
        return int(sum(t.data.size for t in self.tensors.values()))

    def requires_grad_(self, flag: bool = True) -> "UVENetParams":
        for t in self.tensors.values():
            t.requires_grad = flag
        return self

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def grads(self) -> dict[str, np.ndarray | None]:
        return {name: t.grad for name, t in self.tensors.items()}

    def astype(self, precision: str) -> "UVENetParams":
        return UVENetParams({name: t.astype(precision) for name, t in self.tensors.items()})

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.tensors.items()}


# --- parameter manifest ---------------------------------------------------


def _conv_entry(prefix: str, cout: int, cin_per_group: int, kernel: int) -> Manifest:
    return [
        (f"{prefix}.weight", (cout, cin_per_group, kernel, kernel)),
        (f"{prefix}.bias", (1, cout, 1, 1)),
    ]


def _norm_entry(prefix: str, channels: int) -> Manifest:
    return [(f"{prefix}.gamma", (1, channels, 1, 1)), (f"{prefix}.beta", (1, channels, 1, 1))]


def param_manifest(config: ModelConfig) -> Manifest:
    """Ordered (name, shape) list; a pure function of the config."""
    dims, t = config.dims, config.num_frames
    entries: Manifest = []

    entries += _conv_entry("encoder.stem.conv", dims[0], 3, config.stem_stride)
    entries += _norm_entry("encoder.stem.norm", dims[0])
    for s, c in enumerate(dims):
        if s > 0:
            entries += _norm_entry(f"encoder.down{s}.norm", dims[s - 1])
            entries += _conv_entry(f"encoder.down{s}.conv", c, dims[s - 1], 2)
        for b in range(config.depths[s]):
            prefix = f"encoder.stage{s}.block{b}"
            entries += _conv_entry(f"{prefix}.dwconv", c, 1, 7)
            entries += _norm_entry(f"{prefix}.norm", c)
            entries += _conv_entry(f"{prefix}.pwconv1", 4 * c, c, 1)
            entries += _conv_entry(f"{prefix}.pwconv2", c, 4 * c, 1)

    for s, c in enumerate(dims):
        prefix = f"faam{s}"
        if s not in config.faam_scales:
            entries += _conv_entry(f"{prefix}.proj", c, t * c, 1)
            continue
        if config.aggregation != Aggregation.pointwise_only:
            entries += _conv_entry(f"{prefix}.dw", t * c, 1, 3)
        if config.aggregation != Aggregation.depthwise_only:
            entries += _conv_entry(f"{prefix}.pw", c, t * c, 1)
        if config.aggregation == Aggregation.dsc_ca:
            entries += _conv_entry(f"{prefix}.ca.fc1", c // CA_REDUCTION, c, 1)
            entries += _conv_entry(f"{prefix}.ca.fc2", c, c // CA_REDUCTION, 1)

    d = config.decoder_dim
    for s, c in enumerate(dims):
        entries += _conv_entry(f"decoder.lateral{s}", d, c, 1)
    entries += _conv_entry("decoder.fuse1", d, 4 * d, 3)
    entries += _conv_entry("decoder.fuse2", d, d, 3)
    entries += _conv_entry("decoder.expand", 3 * SHUFFLE_FACTOR**2, d, 3)

    if config.use_grm:
        g = config.grm_dim
        entries += _conv_entry("grm.conv1", g, 3 * t + 3, 3)
        entries += _conv_entry("grm.conv2", g, g, 3)
        entries += _conv_entry("grm.conv3", g, g, 3)
        entries += _conv_entry("grm.conv4", 3, g, 3)
    return entries


def format_manifest(config: ModelConfig) -> str:
    return "\n".join(f"{name} {'x'.join(str(d) for d in shape)}" for name, shape in param_manifest(config))


def count_parameters(config: ModelConfig) -> int:
    return int(sum(math.prod(shape) for _, shape in param_manifest(config)))


def init_params(config: ModelConfig, seed: int = 0) -> UVENetParams:
    """Truncated-normal (±2σ, σ = fan_in^-1/2) weights, zero biases, unit norm scales."""
    rng = np.random.default_rng(seed)
    dtype = get_dtype()
    tensors: dict[str, Tensor] = {}
    for name, shape in param_manifest(config):
        if name.endswith(".weight"):
            fan_in = shape[1] * shape[2] * shape[3]
            data = truncnorm.rvs(-2.0, 2.0, scale=1.0 / math.sqrt(fan_in), size=shape, random_state=rng)
        elif name.endswith(".gamma"):
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        tensors[name] = Tensor(data.astype(dtype))
    logger.info("Initialised UVENet with %d tensors, %d parameters (seed=%d)", len(tensors), count_parameters(config), seed)
    return UVENetParams(tensors)


# --- building blocks ------------------------------------------------------


def _conv(x: Tensor, params: UVENetParams, prefix: str, **kwargs) -> Tensor:
    return ops.conv2d(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"], **kwargs)


def _norm(x: Tensor, params: UVENetParams, prefix: str) -> Tensor:
    return ops.instance_norm(x, params[f"{prefix}.gamma"], params[f"{prefix}.beta"])


def _convnext_block(x: Tensor, params: UVENetParams, prefix: str) -> Tensor:
    channels = x.shape[1]
    h = _conv(x, params, f"{prefix}.dwconv", padding=3, groups=channels)
    h = _norm(h, params, f"{prefix}.norm")
    h = ops.gelu(_conv(h, params, f"{prefix}.pwconv1"))
    h = _conv(h, params, f"{prefix}.pwconv2")
    return ops.add(x, h)


def encode_frame(frame: Tensor, params: UVENetParams, config: ModelConfig) -> FeaturePyramid:
    _, _, h, w = frame.shape
    if h % PAD_MULTIPLE or w % PAD_MULTIPLE:
        raise ShapeError(f"encode_frame: spatial size {h}x{w} must be a multiple of {PAD_MULTIPLE}; pad first")

    x = _conv(frame, params, "encoder.stem.conv", stride=config.stem_stride)
    x = _norm(x, params, "encoder.stem.norm")
    pyramid: FeaturePyramid = []
    for s in range(4):
        if s > 0:
            x = _norm(x, params, f"encoder.down{s}.norm")
            x = _conv(x, params, f"encoder.down{s}.conv", stride=2)
        for b in range(config.depths[s]):
            x = _convnext_block(x, params, f"encoder.stage{s}.block{b}")
        pyramid.append(x)
    return pyramid


def grouped_shift(
    feature: Tensor,
    shift_len: int,
    patterns: Sequence[Tuple[int, int]] = SHIFT_PATTERNS,
) -> Tensor:
    if len(patterns) != 8:
        raise ShapeError(f"grouped_shift needs 8 shift patterns, got {len(patterns)}")
    if feature.shape[1] % 8:
        raise ShapeError(f"grouped_shift: {feature.shape[1]} channels not divisible by 8")
    if shift_len == 0:
        return feature
    slices = ops.split_channels(feature, 8)
    shifted = [ops.spatial_shift(part, shift_len * dx, shift_len * dy) for part, (dx, dy) in zip(slices, patterns)]
    return ops.concat_channels(shifted)


def channel_attention(x: Tensor, params: UVENetParams, prefix: str) -> Tensor:
    s = ops.global_avg_pool(x)
    s = ops.gelu(_conv(s, params, f"{prefix}.fc1"))
    s = ops.sigmoid(_conv(s, params, f"{prefix}.fc2"))
    return ops.mul(x, s)


def _sum_frames(x: Tensor, num_frames: int) -> Tensor:
    """Reduce T*C channels to C by summing the per-frame slices.

    The depthwise-only aggregation has no cross-channel weights, so this
    parameter-free sum is what brings it back to C channels.
    """
    parts = ops.split_channels(x, num_frames)
    total = parts[0]
    for part in parts[1:]:
        total = ops.add(total, part)
    return total


def faam_bypass(features: Sequence[Tensor], params: UVENetParams, scale: int) -> Tensor:
    """Concatenate unshifted frame features and project back to C channels."""
    return _conv(ops.concat_channels(list(features)), params, f"faam{scale}.proj")


def faam(features: Sequence[Tensor], params: UVENetParams, config: ModelConfig, scale: int) -> Tensor:
    if len(features) != config.num_frames:
        raise ShapeError(f"faam: expected {config.num_frames} feature maps, got {len(features)}")
    shapes = {f.shape for f in features}
    if len(shapes) != 1:
        raise ShapeError(f"faam: feature maps differ in shape: {sorted(shapes)}")
    if scale not in config.faam_scales:
        return faam_bypass(features, params, scale)

    prefix = f"faam{scale}"
    stacked = ops.concat_channels([grouped_shift(f, config.shift_len) for f in features])
    aggregation = config.aggregation

    if aggregation == Aggregation.pointwise_only:
        return _conv(stacked, params, f"{prefix}.pw")
    if aggregation == Aggregation.depthwise_only:
        spatial = _conv(stacked, params, f"{prefix}.dw", padding=1, groups=stacked.shape[1])
        return _sum_frames(spatial, config.num_frames)

    h = ops.depthwise_separable(
        stacked,
        params[f"{prefix}.dw.weight"],
        params[f"{prefix}.pw.weight"],
        (params[f"{prefix}.dw.bias"], params[f"{prefix}.pw.bias"]),
    )
    if aggregation == Aggregation.dsc_ca:
        h = channel_attention(h, params, f"{prefix}.ca")
    return h


def decode(hs: Sequence[Tensor], params: UVENetParams, config: ModelConfig) -> Tensor:
    if len(hs) != 4:
        raise ShapeError(f"decode expects four scales, got {len(hs)}")
    lateral = []
    for s, h in enumerate(hs):
        y = _conv(h, params, f"decoder.lateral{s}")
        if s > 0:
            y = ops.bilinear_upsample(y, 2**s)
        lateral.append(y)
    x = ops.concat_channels(lateral)
    x = ops.gelu(_conv(x, params, "decoder.fuse1", padding=1))
    x = ops.gelu(_conv(x, params, "decoder.fuse2", padding=1))
    x = _conv(x, params, "decoder.expand", padding=1)
    return ops.pixel_shuffle(x, SHUFFLE_FACTOR)


def grm(y_prime: Tensor, window: FrameWindow, params: UVENetParams, config: ModelConfig) -> Tensor:
    """Scale y' by a per-channel gain in (0, 2) predicted from y' and the raw frames."""
    frames = [window.frame(i) for i in range(window.num_frames)]
    x = ops.concat_channels([y_prime, *frames])
    a = ops.max_pool2d(ops.gelu(_conv(x, params, "grm.conv1", padding=1)))
    a = ops.max_pool2d(ops.gelu(_conv(a, params, "grm.conv2", padding=1)))
    a = ops.gelu(_conv(a, params, "grm.conv3", padding=1))
    a = _conv(a, params, "grm.conv4", padding=1)
    gain = ops.scale(ops.sigmoid(ops.global_avg_pool(a)), 2.0)
    return ops.clamp(ops.mul(y_prime, gain), 0.0, 1.0)


def forward(window: FrameWindow, params: UVENetParams, config: ModelConfig) -> Tensor:
    if window.num_frames != config.num_frames:
        raise ShapeError(f"forward: window has {window.num_frames} frames, model expects {config.num_frames}")
    height, width = window.spatial
    padded = window.padded(PAD_MULTIPLE)

    pyramids = [encode_frame(padded.frame(i), params, config) for i in range(padded.num_frames)]
    hs = [faam([pyr[s] for pyr in pyramids], params, config, s) for s in range(4)]
    y_prime = decode(hs, params, config)
    if config.use_grm:
        y = grm(y_prime, padded, params, config)
    else:
        y = ops.clamp(y_prime, 0.0, 1.0)

    if padded is not window:
        y = ops.crop_spatial(y, height, width)
    return y


# --- checkpoints ----------------------------------------------------------


def save_checkpoint(params: UVENetParams, config: ModelConfig, path: str | Path) -> None:
    meta = {"format": "uvenet", "config": config.model_dump(mode="json")}
    write_tensors(path, params.arrays(), meta)
    logger.info("Saved checkpoint with %d tensors to %s", len(params), path)


def load_checkpoint(path: str | Path) -> Tuple[UVENetParams, ModelConfig]:
    arrays, meta = read_tensors(path)
    if meta.get("format") != "uvenet" or "config" not in meta:
        raise CheckpointError(str(path), "config blob does not describe a UVENet model")
    try:
        config = ModelConfig.model_validate(meta["config"])
    except ValueError as exc:
        raise CheckpointError(str(path), f"invalid model config: {exc}") from exc

    expected = param_manifest(config)
    if [name for name, _ in expected] != list(arrays):
        raise CheckpointError(str(path), "tensor names do not match the parameter manifest")
    for name, shape in expected:
        if arrays[name].shape != shape:
            raise CheckpointError(str(path), f"{name} has shape {arrays[name].shape}, manifest says {shape}")
    return UVENetParams({name: Tensor(arr) for name, arr in arrays.items()}), config

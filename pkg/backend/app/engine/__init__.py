"""Minimal NCHW tensor engine with reverse-mode autodiff, Adam and a cosine schedule."""

from .optim import AdamState, CosineSchedule, adam_step, cosine_lr
from .tensor import Tape, Tensor, backward, get_dtype, precision, recording, set_precision

__all__ = [
    "AdamState",
    "CosineSchedule",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "cosine_lr",
    "get_dtype",
    "precision",
    "recording",
    "set_precision",
]

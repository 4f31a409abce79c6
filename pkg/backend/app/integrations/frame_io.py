"""Frame directories on disk: 8-bit RGB PNGs and 16-bit millimetre depth PNGs.

Frames in memory are HWC float arrays in [0, 1]; files are named
``frame_%06d.png`` and ordered by that index.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Sequence

import numpy as np
from PIL import Image

from ..core.errors import DatasetError


FRAME_PATTERN = "frame_{:06d}.png"
MAX_DEPTH_MM = np.iinfo(np.uint16).max


def to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float64) / 255.0


def quantize(frame: np.ndarray) -> np.ndarray:
    """The frame exactly as it reads back after an 8-bit round trip."""
    return from_uint8(to_uint8(frame))


def to_millimetres(depth_m: np.ndarray) -> np.ndarray:
    return np.clip(np.round(depth_m * 1000.0), 0, MAX_DEPTH_MM).astype(np.uint16)


def frame_paths(directory: str | Path) -> List[Path]:
    return sorted(Path(directory).glob("frame_*.png"))


def write_frame(path: str | Path, frame: np.ndarray) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(frame)).save(target)
    return target


def read_frame(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return from_uint8(np.asarray(img.convert("RGB")))


def write_frames(directory: str | Path, frames: Sequence[np.ndarray]) -> List[Path]:
    out = Path(directory)
    return [write_frame(out / FRAME_PATTERN.format(i), frame) for i, frame in enumerate(frames)]


def read_frames(directory: str | Path) -> List[np.ndarray]:
    paths = frame_paths(directory)
    if not paths:
        raise DatasetError(f"No frame_*.png files in {directory}")
    frames = [read_frame(p) for p in paths]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise DatasetError(f"Frames in {directory} differ in size: {sorted(shapes)}")
    return frames


def write_depth_mm(path: str | Path, depth_mm: np.ndarray) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(depth_mm, dtype=np.uint16)).save(target)
    return target


def read_depth_mm(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img).astype(np.uint16)


def write_depths_mm(directory: str | Path, depths_mm: Sequence[np.ndarray]) -> List[Path]:
    out = Path(directory)
    return [write_depth_mm(out / FRAME_PATTERN.format(i), d) for i, d in enumerate(depths_mm)]


def read_depths_mm(directory: str | Path) -> List[np.ndarray]:
    paths = frame_paths(directory)
    if not paths:
        raise DatasetError(f"No depth frames in {directory}")
    return [read_depth_mm(p) for p in paths]

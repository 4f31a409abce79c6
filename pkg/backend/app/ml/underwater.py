"""Paired underwater/clean video synthesis.

Every frame of a clip is degraded with one set of :class:`WaterParams` using
the exponential attenuation model ``I = J·t + B·(1 − t)``, ``t = exp(−β·d)``.
Depth maps are hole-filled with a multi-scale cross-bilateral filter guided
by the clean frame.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence as SequenceABC
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import get_settings
from ..core.errors import DatasetError, DepthFillError, ShapeError
from ..integrations import frame_io
from ..models.dataset import DatasetManifest, ManifestEntry, SplitTag, WaterParams


logger = logging.getLogger(__name__)

Range = Tuple[float, float]

DEPTH_RANGE_M: Range = (0.5, 10.0)
FILL_RADIUS = 5
FILL_SIGMA_R = 0.1
FILL_SCALES = 3


@dataclass
class DepthMap:
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != self.valid.shape or self.values.ndim != 2:
            raise ShapeError(f"DepthMap values {self.values.shape} and mask {self.valid.shape} must be matching 2-D maps")
        if np.any(self.values[self.valid] <= 0):
            raise ValueError("valid depths must be positive")

    @classmethod
    def dense(cls, values: np.ndarray) -> "DepthMap":
        return cls(np.asarray(values, dtype=np.float64), np.ones(values.shape, dtype=bool))

    @classmethod
    def from_millimetres(cls, depth_mm: np.ndarray) -> "DepthMap":
        """Zero millimetres marks a missing measurement."""
        depth_mm = np.asarray(depth_mm)
        return cls(depth_mm.astype(np.float64) / 1000.0, depth_mm > 0)

    @property
    def complete(self) -> bool:
        return bool(self.valid.all())


@dataclass
class CleanClip:
    clip_id: str
    frames: List[np.ndarray]
    depths: List[DepthMap]

    def __post_init__(self) -> None:
        if not self.frames:
            raise DatasetError(f"clip {self.clip_id} has no frames")
        if len(self.frames) != len(self.depths):
            raise DatasetError(f"clip {self.clip_id}: {len(self.frames)} frames but {len(self.depths)} depth maps")
        size = self.frames[0].shape[:2]
        for frame, depth in zip(self.frames, self.depths):
            if frame.shape[:2] != size or depth.values.shape != size:
                raise DatasetError(f"clip {self.clip_id}: frames and depths must share one spatial size {size}")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class WaterPreset:
    beta: Tuple[Range, Range, Range]
    background: Tuple[Range, Range, Range]
    # (hi, lo) channel pairs whose attenuation must stay ordered
    ordering: Tuple[Tuple[int, int], ...] = field(default=())


# Plausibility ranges, not measured values. Red attenuates fastest in clear water.
WATER_PRESETS: Dict[str, WaterPreset] = {
    "blue-ocean": WaterPreset(
        beta=((0.35, 0.55), (0.05, 0.12), (0.03, 0.08)),
        background=((0.0, 0.15), (0.3, 0.5), (0.5, 0.75)),
        ordering=((1, 2),),
    ),
    "green-coastal": WaterPreset(
        beta=((0.30, 0.45), (0.08, 0.15), (0.12, 0.25)),
        background=((0.05, 0.2), (0.45, 0.65), (0.3, 0.5)),
    ),
    "turbid": WaterPreset(
        beta=((0.25, 0.6), (0.25, 0.6), (0.25, 0.6)),
        background=((0.25, 0.45), (0.35, 0.55), (0.3, 0.5)),
    ),
}


# --- depth preprocessing --------------------------------------------------


def _cross_bilateral(
    values: np.ndarray,
    valid: np.ndarray,
    guide: np.ndarray,
    radius: int,
    step: int,
    sigma_s: float,
    sigma_r: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Weighted sums over valid neighbours sampled every ``step`` pixels."""
    h, w = values.shape
    pad = radius * step
    v = np.pad(values, pad)
    m = np.pad(valid.astype(np.float64), pad)
    g = np.pad(guide, ((pad, pad), (pad, pad), (0, 0)), mode="edge")

    num = np.zeros((h, w))
    den = np.zeros((h, w))
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            oy, ox = pad + dy * step, pad + dx * step
            w_s = np.exp(-(dy * dy + dx * dx) / (2.0 * sigma_s**2))
            diff = guide - g[oy : oy + h, ox : ox + w]
            w_r = np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * sigma_r**2))
            weight = w_s * w_r * m[oy : oy + h, ox : ox + w]
            num += weight * v[oy : oy + h, ox : ox + w]
            den += weight
    return num, den


def fill_depth(
    depth: DepthMap,
    guide: np.ndarray,
    radius: int = FILL_RADIUS,
    sigma_s: Optional[float] = None,
    sigma_r: float = FILL_SIGMA_R,
    scales: int = FILL_SCALES,
) -> DepthMap:
    """Fill missing depths coarse to fine; finer scales overwrite coarser estimates.

    Holes out of reach of every scale are closed by repeating the finest pass
    with the already-filled pixels acting as sources.
    """
    if guide.shape[:2] != depth.values.shape:
        raise ShapeError(f"guide {guide.shape} does not match depth {depth.values.shape}")
    if depth.complete:
        return DepthMap(depth.values.copy(), depth.valid.copy())
    if not depth.valid.any():
        raise DepthFillError("depth map has no valid pixels to propagate from")

    sigma_s = radius / 2.0 if sigma_s is None else sigma_s
    guide = np.asarray(guide, dtype=np.float64)
    holes = ~depth.valid
    filled = np.where(depth.valid, depth.values, 0.0)
    done = depth.valid.copy()

    for level in reversed(range(scales)):
        num, den = _cross_bilateral(depth.values, depth.valid, guide, radius, 2**level, sigma_s, sigma_r)
        reached = holes & (den > 0)
        filled[reached] = num[reached] / den[reached]
        done |= reached

    passes = 0
    while not done.all():
        num, den = _cross_bilateral(filled, done, guide, radius, 1, sigma_s, sigma_r)
        reached = ~done & (den > 0)
        if not reached.any():
            raise DepthFillError("depth propagation stalled with holes remaining")
        filled[reached] = num[reached] / den[reached]
        done |= reached
        passes += 1
    if passes:
        logger.debug("fill_depth needed %d propagation passes", passes)
    return DepthMap(filled, done)


def center_crop(frame: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Crop around the centre; an odd margin loses its extra pixel at the bottom/right."""
    h, w = frame.shape[:2]
    if target_h > h or target_w > w or target_h < 1 or target_w < 1:
        raise ShapeError(f"cannot crop {h}x{w} to {target_h}x{target_w}")
    top = (h - target_h) // 2
    left = (w - target_w) // 2
    return frame[top : top + target_h, left : left + target_w]


# --- degradation ----------------------------------------------------------


def degrade_frame(clean: np.ndarray, depth: DepthMap | np.ndarray, water: WaterParams) -> np.ndarray:
    d = depth.values if isinstance(depth, DepthMap) else np.asarray(depth, dtype=np.float64)
    if clean.shape[:2] != d.shape or clean.shape[-1] != 3:
        raise ShapeError(f"degrade_frame: frame {clean.shape} does not match depth {d.shape}")
    beta = np.asarray(water.beta, dtype=np.float64)
    background = np.asarray(water.background, dtype=np.float64)
    transmission = np.exp(-beta[None, None, :] * d[..., None])
    degraded = clean * transmission + background * (1.0 - transmission)
    return np.clip(degraded, 0.0, 1.0)


def synth_clip(clean: CleanClip, water: WaterParams) -> List[np.ndarray]:
    return [degrade_frame(frame, depth, water) for frame, depth in zip(clean.frames, clean.depths)]


def sample_water(
    seed: int | np.random.SeedSequence,
    preset_pool: Sequence[str] = tuple(WATER_PRESETS),
) -> WaterParams:
    if not preset_pool:
        raise ValueError("preset_pool must name at least one preset")
    rng = np.random.default_rng(seed)
    name = preset_pool[int(rng.integers(len(preset_pool)))]
    preset = WATER_PRESETS[name]
    beta = [float(rng.uniform(lo, hi)) for lo, hi in preset.beta]
    background = [float(rng.uniform(lo, hi)) for lo, hi in preset.background]
    for hi, lo in preset.ordering:
        if beta[lo] > beta[hi]:
            beta[hi], beta[lo] = beta[lo], beta[hi]
    return WaterParams(beta=tuple(beta), background=tuple(background), preset=name)


# --- clean clips ----------------------------------------------------------


def gen_procedural_clip(
    seed: int | Sequence[int],
    n_frames: int,
    h: int,
    w: int,
    motion: int = 1,
    clip_id: Optional[str] = None,
) -> CleanClip:
    """Checkerboard over a colour gradient, translating right by ``motion`` px per frame."""
    rng = np.random.default_rng(seed)
    span = w + motion * (n_frames - 1)
    yy, xx = np.mgrid[0:h, 0:span]

    cell = int(rng.integers(4, 9))
    phase_y, phase_x = rng.integers(0, cell, size=2)
    checker = ((yy + phase_y) // cell + (xx + phase_x) // cell) % 2
    colour_a, colour_b = rng.uniform(0.15, 0.95, size=(2, 3))
    corner_tl, corner_br = rng.uniform(0.0, 1.0, size=(2, 3))

    ramp = ((yy / max(h - 1, 1) + xx / max(span - 1, 1)) / 2.0)[..., None]
    gradient = corner_tl * (1.0 - ramp) + corner_br * ramp
    pattern = np.where(checker[..., None] == 1, colour_a, colour_b)
    canvas = np.clip(0.65 * pattern + 0.35 * gradient, 0.0, 1.0)

    near = float(rng.uniform(DEPTH_RANGE_M[0], 2.0))
    far = float(rng.uniform(4.0, DEPTH_RANGE_M[1]))
    depth = np.repeat(np.linspace(near, far, h)[:, None], w, axis=1)

    frames, depths = [], []
    for t in range(n_frames):
        start = motion * (n_frames - 1 - t)
        frames.append(canvas[:, start : start + w].copy())
        depths.append(DepthMap.dense(depth.copy()))
    if clip_id is None:
        clip_id = "proc-" + "-".join(str(s) for s in np.atleast_1d(seed))
    return CleanClip(clip_id, frames, depths)


def load_clean_clip(
    clip_dir: str | Path,
    crop: Optional[Tuple[int, int]] = None,
    clip_id: Optional[str] = None,
) -> CleanClip:
    """Read ``<clip_dir>/frames`` and ``<clip_dir>/depth`` (16-bit mm, 0 = missing)."""
    root = Path(clip_dir)
    frames = frame_io.read_frames(root / "frames")
    raw_depths = frame_io.read_depths_mm(root / "depth")
    if len(raw_depths) != len(frames):
        raise DatasetError(f"{root}: {len(frames)} frames but {len(raw_depths)} depth maps")

    if crop is not None:
        frames = [center_crop(f, *crop) for f in frames]
        raw_depths = [center_crop(d, *crop) for d in raw_depths]

    depths = [fill_depth(DepthMap.from_millimetres(d), f) for d, f in zip(raw_depths, frames)]
    return CleanClip(clip_id or root.name, frames, depths)


# --- dataset --------------------------------------------------------------


class ProceduralClips(SequenceABC):
    """Lazily generated procedural clips; clip ``i`` is rebuilt on every access."""

    def __init__(self, count: int, seed: int, n_frames: int, h: int, w: int, motion: int = 1) -> None:
        self.count = count
        self.seed = seed
        self.n_frames = n_frames
        self.h = h
        self.w = w
        self.motion = motion

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, index: int) -> CleanClip:  # type: ignore[override]
        if not 0 <= index < self.count:
            raise IndexError(index)
        return gen_procedural_clip(
            [self.seed, index], self.n_frames, self.h, self.w, self.motion, clip_id=self.clip_ids[index]
        )

    @property
    def clip_ids(self) -> List[str]:
        return [f"proc{i:05d}" for i in range(self.count)]


def _clip_ids(clips: Sequence[CleanClip]) -> List[str]:
    if isinstance(clips, ProceduralClips):
        return clips.clip_ids
    return [c.clip_id for c in clips]


def _split_assignment(ids: Sequence[str], split_ratio: float, seed: int) -> Dict[str, SplitTag]:
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(round(len(ids) * split_ratio))
    return {ids[int(index)]: SplitTag.train if rank < n_train else SplitTag.test for rank, index in enumerate(order)}


def _write_clip(
    clip_index: int,
    clips: Sequence[CleanClip],
    split: SplitTag,
    styles_per_clip: int,
    seed: int,
    out_dir: Path,
) -> List[ManifestEntry]:
    clip = clips[clip_index]
    if any(not d.complete for d in clip.depths):
        raise DatasetError(f"clip {clip.clip_id} has unfilled depth; run fill_depth first")
    clean_rel = Path("clean") / clip.clip_id
    depth_rel = Path("depth") / clip.clip_id

    # degrade exactly what is stored so stored pairs can be re-derived bit for bit
    stored_frames = [frame_io.quantize(f) for f in clip.frames]
    stored_mm = [frame_io.to_millimetres(d.values) for d in clip.depths]
    frame_io.write_frames(out_dir / clean_rel, stored_frames)
    frame_io.write_depths_mm(out_dir / depth_rel, stored_mm)
    stored = CleanClip(clip.clip_id, stored_frames, [DepthMap.from_millimetres(mm) for mm in stored_mm])

    entries = []
    for style in range(1, styles_per_clip + 1):
        water = sample_water(np.random.SeedSequence([seed, clip_index, style]))
        uw_rel = Path("underwater") / f"{clip.clip_id}_s{style}"
        frame_io.write_frames(out_dir / uw_rel, synth_clip(stored, water))
        entries.append(
            ManifestEntry(
                clip_id=clip.clip_id,
                clean_path=clean_rel.as_posix(),
                underwater_path=uw_rel.as_posix(),
                water=water,
                split=split,
                style=style,
            )
        )
    logger.info("Synthesised clip %s (%d frames, %d styles, %s)", clip.clip_id, len(clip), styles_per_clip, split.value)
    return entries


def build_dataset(
    clips: Sequence[CleanClip],
    styles_per_clip: int = 3,
    split_ratio: float = 220 / 280,
    seed: int = 0,
    out_dir: str | Path = "data/suve",
    threads: Optional[int] = None,
) -> DatasetManifest:
    """Write clean/depth/underwater frame directories plus ``manifest.json``.

    The train/test split is drawn per clean clip before any styling, so all
    styles of one clip share a split.
    """
    if len(clips) == 0:
        raise DatasetError("build_dataset needs at least one clean clip")
    ids = _clip_ids(clips)
    if len(set(ids)) != len(ids):
        raise DatasetError("clip ids must be unique")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = _split_assignment(ids, split_ratio, seed)
    workers = threads or get_settings().threads

    def write(index: int) -> List[ManifestEntry]:
        return _write_clip(index, clips, splits[ids[index]], styles_per_clip, seed, out)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_clip = list(pool.map(write, range(len(ids))))
    else:
        per_clip = [write(i) for i in range(len(ids))]

    manifest = DatasetManifest(
        seed=seed,
        styles_per_clip=styles_per_clip,
        entries=[entry for entries in per_clip for entry in entries],
    )
    (out / "manifest.json").write_text(manifest.model_dump_json(indent=2))
    counts = manifest.counts()
    logger.info("Dataset written to %s: %d train / %d test pairs", out, counts["train"], counts["test"])
    return manifest


def load_manifest(path: str | Path) -> DatasetManifest:
    source = Path(path)
    if not source.exists():
        raise DatasetError(f"manifest {source} does not exist")
    return DatasetManifest.model_validate_json(source.read_text())

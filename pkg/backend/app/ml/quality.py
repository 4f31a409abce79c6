"""Frame- and video-level quality metrics for enhanced underwater footage.

Frames are HWC RGB float arrays in [0, 1]; videos are sequences of frames.
Reference metrics (PSNR, SSIM, MSE(MABD)) need the ground truth; UIQM,
UCIQE and CDC are no-reference.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage, special, stats
from skimage import color
from skimage.metrics import structural_similarity

from ..core.config import get_settings
from ..core.errors import ShapeError
from ..integrations.reports import METRIC_COLUMNS, metrics_frame
from ..models.metrics import FrameMetrics, VideoMetrics


logger = logging.getLogger(__name__)

PSNR_CAP = 100.0
LUMA = np.array([0.299, 0.587, 0.114])
BLOCK = 8
TRIM_ALPHA = 0.1
HIST_BINS = 256
CDC_STRIDES = (1, 2, 4)
MABD_SCALE = 1e4
# SSIM's 11x11 Gaussian window
SSIM_MIN_SIDE = 11

Video = Sequence[np.ndarray]


def _check_frame(frame: np.ndarray, name: str = "frame") -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[-1] != 3:
        raise ShapeError(f"{name} must be an HxWx3 RGB array, got {frame.shape}")
    return frame


def _check_pair(pred: np.ndarray, ref: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pred, ref = _check_frame(pred, "pred"), _check_frame(ref, "ref")
    if pred.shape != ref.shape:
        raise ShapeError(f"pred {pred.shape} and ref {ref.shape} differ in shape")
    return pred, ref


def luma(frame: np.ndarray) -> np.ndarray:
    return _check_frame(frame) @ LUMA


# --- full reference -------------------------------------------------------


def psnr(pred: np.ndarray, ref: np.ndarray) -> float:
    pred, ref = _check_pair(pred, ref)
    mse = float(np.mean((pred - ref) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def ssim(pred: np.ndarray, ref: np.ndarray) -> float:
    """Gaussian-window (σ=1.5, 11×11) SSIM on luma, averaged over interior window centres."""
    pred, ref = _check_pair(pred, ref)
    if min(pred.shape[:2]) < SSIM_MIN_SIDE:
        raise ShapeError(f"ssim needs frames of at least {SSIM_MIN_SIDE}x{SSIM_MIN_SIDE}, got {pred.shape[:2]}")
    score = structural_similarity(
        luma(pred),
        luma(ref),
        gaussian_weights=True,
        sigma=1.5,
        use_sample_covariance=False,
        data_range=1.0,
        K1=0.01,
        K2=0.03,
    )
    return float(np.clip(score, -1.0, 1.0))


# --- UIQM -----------------------------------------------------------------


def uicm(frame: np.ndarray) -> float:
    frame = _check_frame(frame)
    r, g, b = frame[..., 0].ravel(), frame[..., 1].ravel(), frame[..., 2].ravel()
    rg = r - g
    yb = (r + g) / 2.0 - b
    mu_rg = stats.trim_mean(rg, TRIM_ALPHA)
    mu_yb = stats.trim_mean(yb, TRIM_ALPHA)
    var_rg = np.mean((rg - mu_rg) ** 2)
    var_yb = np.mean((yb - mu_yb) ** 2)
    return float(-0.0268 * math.hypot(mu_rg, mu_yb) + 0.1586 * math.sqrt(var_rg + var_yb))


def _blocks(channel: np.ndarray) -> np.ndarray:
    """Full BLOCK×BLOCK tiles as (k1, k2, BLOCK*BLOCK); trailing partial tiles dropped."""
    k1, k2 = channel.shape[0] // BLOCK, channel.shape[1] // BLOCK
    tiles = channel[: k1 * BLOCK, : k2 * BLOCK].reshape(k1, BLOCK, k2, BLOCK)
    return tiles.transpose(0, 2, 1, 3).reshape(k1, k2, BLOCK * BLOCK)


def eme(channel: np.ndarray) -> float:
    tiles = _blocks(channel)
    if tiles.size == 0:
        return 0.0
    hi, lo = tiles.max(axis=-1), tiles.min(axis=-1)
    usable = (lo > 0) & (hi != lo)
    ratio = np.where(usable, hi / np.where(usable, lo, 1.0), 1.0)
    k1, k2 = hi.shape
    return float(2.0 / (k1 * k2) * np.sum(np.log(ratio)))


def uism(frame: np.ndarray) -> float:
    frame = _check_frame(frame)
    scores = []
    for c in range(3):
        channel = frame[..., c]
        magnitude = np.hypot(ndimage.sobel(channel, axis=1), ndimage.sobel(channel, axis=0))
        scores.append(eme(magnitude * channel))
    return float(np.dot(LUMA, scores))


def uiconm(frame: np.ndarray) -> float:
    tiles = _blocks(luma(frame))
    if tiles.size == 0:
        return 0.0
    hi, lo = tiles.max(axis=-1), tiles.min(axis=-1)
    total = hi + lo
    m = np.where(total > 0, (hi - lo) / np.where(total > 0, total, 1.0), 0.0)
    contribution = np.where(m > 0, m * np.log(np.where(m > 0, m, 1.0)), 0.0)
    return float(contribution.mean())


def uiqm(frame: np.ndarray) -> float:
    return 0.0282 * uicm(frame) + 0.2953 * uism(frame) + 3.5753 * uiconm(frame)


# --- UCIQE ----------------------------------------------------------------


def rgb_to_lab(frame: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """sRGB → CIELab (D65, 2° observer)."""
    lab = color.rgb2lab(np.clip(_check_frame(frame), 0.0, 1.0))
    return lab[..., 0], lab[..., 1], lab[..., 2]


def uciqe(frame: np.ndarray) -> float:
    lightness, a, b = rgb_to_lab(frame)
    chroma = np.hypot(a, b)
    sigma_c = float(np.std(chroma)) / 100.0
    p1, p99 = np.percentile(lightness, [1, 99])
    con_l = float(p99 - p1) / 100.0
    denom = np.hypot(chroma, lightness)
    saturation = np.where(denom > 0, chroma / np.where(denom > 0, denom, 1.0), 0.0)
    return 0.4680 * sigma_c + 0.2745 * con_l + 0.2576 * float(saturation.mean())


# --- temporal -------------------------------------------------------------


def _stack(video: Video, name: str, min_frames: int = 2) -> np.ndarray:
    if len(video) < min_frames:
        raise ShapeError(f"{name} needs at least {min_frames} frames, got {len(video)}")
    frames = [_check_frame(f, name) for f in video]
    if len({f.shape for f in frames}) != 1:
        raise ShapeError(f"{name} frames differ in shape")
    return np.stack(frames)


def mabd_map(video: Video) -> np.ndarray:
    brightness = _stack(video, "video") @ LUMA
    return np.mean(np.abs(np.diff(brightness, axis=0)), axis=0)


def mse_mabd(enh_video: Video, gt_video: Video) -> float:
    if len(enh_video) != len(gt_video):
        raise ShapeError(f"videos differ in length: {len(enh_video)} vs {len(gt_video)}")
    enh, gt = mabd_map(enh_video), mabd_map(gt_video)
    if enh.shape != gt.shape:
        raise ShapeError(f"videos differ in frame size: {enh.shape} vs {gt.shape}")
    return MABD_SCALE * float(np.mean((enh - gt) ** 2))


def jsd(p: np.ndarray, q: np.ndarray) -> float:
    m = (p + q) / 2.0
    return float(0.5 * np.sum(special.rel_entr(p, m)) + 0.5 * np.sum(special.rel_entr(q, m)))


def color_histograms(frame: np.ndarray) -> np.ndarray:
    """(3, 256) normalised per-channel histograms over [0, 1]."""
    pixels = frame.reshape(-1, 3)
    hists = [np.histogram(pixels[:, c], bins=HIST_BINS, range=(0.0, 1.0))[0] for c in range(3)]
    return np.asarray(hists, dtype=np.float64) / pixels.shape[0]


def cdc(video: Video) -> float:
    frames = _stack(video, "video")
    hists = [color_histograms(f) for f in frames]
    n = len(hists)
    per_stride = []
    for stride in CDC_STRIDES:
        if stride > n - 1:
            continue
        scores = [jsd(hists[t][c], hists[t + stride][c]) for t in range(n - stride) for c in range(3)]
        per_stride.append(np.mean(scores))
    return float(np.mean(per_stride))


# --- reports --------------------------------------------------------------


def _frame_metrics(index: int, enh: np.ndarray, gt: Optional[np.ndarray]) -> FrameMetrics:
    return FrameMetrics(
        index=index,
        psnr=None if gt is None else psnr(enh, gt),
        ssim=None if gt is None else ssim(enh, gt),
        uiqm=uiqm(enh),
        uciqe=uciqe(enh),
    )


def evaluate_video(
    enh: Video,
    gt: Optional[Video] = None,
    name: str = "video",
    threads: Optional[int] = None,
) -> VideoMetrics:
    """Per-frame and temporal metrics for one video.

    With ground truth every frame must be at least ``SSIM_MIN_SIDE`` pixels on
    each side; smaller frames raise :class:`ShapeError` before any scoring.
    No-reference scoring has no size limit.
    """
    if not enh:
        raise ShapeError("evaluate_video needs at least one frame")
    if gt is not None and len(gt) != len(enh):
        raise ShapeError(f"enhanced video has {len(enh)} frames, ground truth {len(gt)}")
    if gt is not None:
        height, width = np.shape(enh[0])[:2]
        if min(height, width) < SSIM_MIN_SIDE:
            raise ShapeError(
                f"reference metrics need frames of at least {SSIM_MIN_SIDE}x{SSIM_MIN_SIDE}, got {(height, width)}"
            )

    refs: List[Optional[np.ndarray]] = list(gt) if gt is not None else [None] * len(enh)
    workers = threads or get_settings().threads
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            frames = list(pool.map(_frame_metrics, range(len(enh)), enh, refs))
    else:
        frames = [_frame_metrics(i, e, r) for i, (e, r) in enumerate(zip(enh, refs))]

    def mean(key: str) -> Optional[float]:
        values = [getattr(f, key) for f in frames]
        return None if values[0] is None else float(np.mean(values))

    temporal = len(enh) >= 2
    report = VideoMetrics(
        name=name,
        frames=frames,
        psnr=mean("psnr"),
        ssim=mean("ssim"),
        uiqm=mean("uiqm"),
        uciqe=mean("uciqe"),
        mse_mabd=mse_mabd(enh, gt) if gt is not None and temporal else None,
        cdc=cdc(enh) if temporal else None,
    )
    logger.info("Evaluated %s: %d frames, %s", name, len(frames), report.summary_row())
    return report


def evaluate_dataset(
    videos: Mapping[str, Tuple[Video, Optional[Video]]],
    threads: Optional[int] = None,
) -> Tuple[List[VideoMetrics], pd.DataFrame]:
    """Score several videos; the returned table ends with a ``mean`` row."""
    reports = [evaluate_video(enh, gt, name=name, threads=threads) for name, (enh, gt) in videos.items()]
    table = metrics_frame(reports)
    numeric = [c for c in METRIC_COLUMNS if c in table.columns]
    mean_row = {"video": "mean", **table[numeric].mean(skipna=True).to_dict()}
    table = pd.concat([table, pd.DataFrame([mean_row])], ignore_index=True)
    return reports, table

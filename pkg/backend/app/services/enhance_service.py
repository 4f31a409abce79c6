import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from ..core.config import get_settings
from ..core.errors import DatasetError
from ..integrations import frame_io
from ..ml.uvenet import FrameWindow, UVENetParams, forward, load_checkpoint
from ..models.jobs import EnhanceRequest, EnhanceResponse
from ..models.network import ModelConfig


logger = logging.getLogger(__name__)


def window_indices(n_frames: int, num_frames: int, t: int) -> List[int]:
    """Frames t-k..t+k, clamped to the clip (replicate padding at both ends)."""
    k = num_frames // 2
    return [min(max(i, 0), n_frames - 1) for i in range(t - k, t + k + 1)]


def enhance_frames(
    frames: Sequence[np.ndarray],
    params: UVENetParams,
    config: ModelConfig,
    parallel: bool = False,
    threads: Optional[int] = None,
) -> List[np.ndarray]:
    """Sliding-window inference: one output frame per input frame."""
    if not frames:
        raise DatasetError("enhance_frames needs at least one frame")
    chw = [np.asarray(f, dtype=np.float64).transpose(2, 0, 1) for f in frames]

    def run(t: int) -> np.ndarray:
        window = FrameWindow(np.stack([chw[i] for i in window_indices(len(chw), config.num_frames, t)])[None])
        y = forward(window, params, config)
        return y.data[0].transpose(1, 2, 0).astype(np.float64)

    workers = threads or get_settings().threads
    if parallel and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, range(len(chw))))
    return [run(t) for t in range(len(chw))]


class EnhanceService:
    def enhance(self, request: EnhanceRequest) -> EnhanceResponse:
        params, config = load_checkpoint(request.checkpoint_path)
        frames = frame_io.read_frames(request.input_dir)
        outputs = enhance_frames(frames, params, config, parallel=request.parallel)
        paths = frame_io.write_frames(request.output_dir, outputs)
        logger.info("Enhanced %d frames from %s into %s", len(paths), request.input_dir, request.output_dir)
        return EnhanceResponse(output_dir=str(request.output_dir), frames=len(paths), paths=[str(p) for p in paths])

import logging
import queue
import subprocess
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Tuple

import numpy as np

from .. import __version__
from ..core.config import get_settings
from ..core.errors import DatasetError, NonFiniteError, TrainingError
from ..engine import AdamState, CosineSchedule, Tensor, adam_step, recording
from ..engine.ops import l1_loss
from ..integrations import frame_io, reports, tracking
from ..ml.quality import evaluate_video, psnr
from ..ml.underwater import load_manifest
from ..ml.uvenet import FrameWindow, forward, init_params, save_checkpoint
from ..models.dataset import DatasetManifest, ManifestEntry, SplitTag
from ..models.training import AugmentConfig, LossRecord, RunReport, TrainConfig
from .enhance_service import enhance_frames
from .store import store


logger = logging.getLogger(__name__)


@dataclass
class ClipPair:
    name: str
    frames: np.ndarray  # (L, H, W, 3) underwater
    gt: np.ndarray  # (L, H, W, 3) clean

    def __post_init__(self) -> None:
        if self.frames.shape != self.gt.shape:
            raise DatasetError(f"{self.name}: underwater {self.frames.shape} and clean {self.gt.shape} differ")

    def __len__(self) -> int:
        return self.frames.shape[0]


def load_pair(entry: ManifestEntry, root: Path) -> ClipPair:
    return ClipPair(
        name=Path(entry.underwater_path).name,
        frames=np.stack(frame_io.read_frames(root / entry.underwater_path)),
        gt=np.stack(frame_io.read_frames(root / entry.clean_path)),
    )


def sample_window(
    pair: ClipPair,
    num_frames: int,
    crop_size: int,
    augment: AugmentConfig,
    rng: np.random.Generator,
) -> Tuple[FrameWindow, np.ndarray]:
    """One training window and its centre ground truth, shaped (3, crop, crop).

    Crop position and augmentation are drawn once and applied identically to
    all T frames and the ground truth.
    """
    length, height, width, _ = pair.frames.shape
    if crop_size > height or crop_size > width:
        raise DatasetError(f"crop {crop_size} larger than frames {height}x{width} in {pair.name}")

    k = num_frames // 2
    if length >= num_frames:
        start = int(rng.integers(0, length - num_frames + 1))
        indices = list(range(start, start + num_frames))
    else:
        centre = int(rng.integers(0, length))
        indices = [min(max(i, 0), length - 1) for i in range(centre - k, centre + k + 1)]
    top = int(rng.integers(0, height - crop_size + 1))
    left = int(rng.integers(0, width - crop_size + 1))
    flip = bool(augment.hflip and rng.random() < 0.5)
    turns = int(rng.integers(0, 4)) if augment.rot90 else 0

    rows, cols = slice(top, top + crop_size), slice(left, left + crop_size)
    stack = np.concatenate([pair.frames[indices, rows, cols], pair.gt[indices[k], rows, cols][None]])
    if flip:
        stack = stack[:, :, ::-1]
    if turns:
        stack = np.rot90(stack, turns, axes=(1, 2))
    stack = np.ascontiguousarray(stack.transpose(0, 3, 1, 2))
    return FrameWindow(stack[:num_frames][None]), stack[num_frames]


def sample_batch(
    pairs: List[ClipPair],
    config: TrainConfig,
    rng: np.random.Generator,
) -> Tuple[FrameWindow, np.ndarray]:
    windows, targets = [], []
    for _ in range(config.batch_size):
        pair = pairs[int(rng.integers(0, len(pairs)))]
        window, gt = sample_window(pair, config.model.num_frames, config.crop_size, config.augment, rng)
        windows.append(window.frames)
        targets.append(gt)
    return FrameWindow(np.concatenate(windows)), np.stack(targets)


class BatchLoader:
    """Prepares batches on a worker thread into a bounded queue.

    A single producer draws from one generator, so the batch sequence is the
    same as synchronous sampling.
    """

    _DONE = object()

    def __init__(self, pairs: List[ClipPair], config: TrainConfig, rng: np.random.Generator, count: int) -> None:
        self.pairs = pairs
        self.config = config
        self.rng = rng
        self.count = count
        self.queue: "queue.Queue[object]" = queue.Queue(maxsize=max(config.prefetch, 1))
        self.stop = threading.Event()
        self.thread: Optional[threading.Thread] = None

    def _produce(self) -> None:
        try:
            for _ in range(self.count):
                if self.stop.is_set():
                    return
                self.queue.put(sample_batch(self.pairs, self.config, self.rng))
        except Exception as exc:  # surfaced to the consumer
            self.queue.put(exc)
        self.queue.put(self._DONE)

    def __iter__(self) -> Iterator[Tuple[FrameWindow, np.ndarray]]:
        if self.config.prefetch == 0:
            for _ in range(self.count):
                yield sample_batch(self.pairs, self.config, self.rng)
            return

        self.thread = threading.Thread(target=self._produce, name="batch-loader", daemon=True)
        self.thread.start()
        try:
            while True:
                item = self.queue.get()
                if item is self._DONE:
                    return
                if isinstance(item, Exception):
                    raise item
                yield item  # type: ignore[misc]
        finally:
            self.stop.set()
            # unblock a producer waiting on a full queue
            while not self.queue.empty():
                self.queue.get_nowait()


def _git_commit() -> Optional[str]:
    try:
        result = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True, timeout=5, check=True
        )
    except (OSError, subprocess.SubprocessError):
        return None
    return result.stdout.strip() or None


def _intermediate_path(final: Path, iteration: int) -> Path:
    return final.with_name(f"{final.stem}_it{iteration:06d}{final.suffix}")


class TrainingService:
    def load_training_pairs(self, manifest: DatasetManifest, root: Path) -> List[ClipPair]:
        entries = manifest.select(SplitTag.train)
        if not entries:
            raise DatasetError("manifest has no training pairs")
        return [load_pair(e, root) for e in entries]

    def holdout_pair(self, manifest: DatasetManifest, root: Path) -> ClipPair:
        entries = manifest.select(SplitTag.test) or manifest.select(SplitTag.train)
        return load_pair(entries[0], root)

    def train(self, config: TrainConfig) -> RunReport:
        if config.manifest_path is None:
            raise DatasetError("TrainConfig.manifest_path is required")
        manifest = load_manifest(config.manifest_path)
        root = Path(config.manifest_path).parent
        pairs = self.load_training_pairs(manifest, root)

        run_id = uuid.uuid4().hex[:12]
        started = time.perf_counter()
        params = init_params(config.model, seed=config.seed).requires_grad_(True)
        schedule = CosineSchedule(lr0=config.lr0, eta_min=config.eta_min, t_max=config.total_iters)
        state = AdamState(lr=config.lr0, beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps)
        rng = np.random.default_rng([config.seed, 1])
        checkpoint = Path(config.checkpoint_path)

        logger.info(
            "Run %s: %d iterations, batch %d, crop %d, %d training pairs, %d parameters",
            run_id,
            config.total_iters,
            config.batch_size,
            config.crop_size,
            len(pairs),
            params.num_parameters(),
        )

        losses: List[LossRecord] = []
        loader = BatchLoader(pairs, config, rng, config.total_iters)
        for it, (window, target) in enumerate(loader):
            lr = schedule(it)
            params.zero_grad()
            try:
                with recording() as tape:
                    loss = l1_loss(forward(window, params, config.model), Tensor(target))
                tape.backward(loss)
            except NonFiniteError as exc:
                raise TrainingError(f"iteration {it}: {exc}") from exc
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"iteration {it}: non-finite loss {value}")
            adam_step(params.tensors, params.grads(), state, lr=lr)

            if it % config.log_every == 0 or it == config.total_iters - 1:
                losses.append(LossRecord(iteration=it, loss=value, lr=lr))
                logger.info("Run %s it %d loss %.5f lr %.3e", run_id, it, value, lr)
            if config.checkpoint_every and (it + 1) % config.checkpoint_every == 0 and it + 1 < config.total_iters:
                save_checkpoint(params, config.model, _intermediate_path(checkpoint, it + 1))

        save_checkpoint(params, config.model, checkpoint)

        final_metrics = None
        extra = {}
        if config.eval_holdout:
            pair = self.holdout_pair(manifest, root)
            enhanced = enhance_frames(list(pair.frames), params, config.model)
            final_metrics = evaluate_video(enhanced, list(pair.gt), name=pair.name)
            extra["raw_psnr"] = float(np.mean([psnr(f, g) for f, g in zip(pair.frames, pair.gt)]))

        report = RunReport(
            run_id=run_id,
            losses=losses,
            wall_time_s=time.perf_counter() - started,
            final_metrics=final_metrics,
            config=config,
            version=__version__,
            git_commit=_git_commit(),
            checkpoint_path=str(checkpoint),
            extra=extra,
        )
        run_dir = Path(config.output_dir) / run_id
        reports.save_json(report, run_dir / "report.json")
        reports.save_csv(reports.loss_frame(losses), run_dir / "losses.csv")
        with store.lock:
            store.runs[run_id] = report

        settings = get_settings()
        if settings.mlflow_tracking_uri:
            tracking.log_training_run(report, settings.mlflow_tracking_uri)
        logger.info("Run %s finished in %.1fs, checkpoint %s", run_id, report.wall_time_s, checkpoint)
        return report

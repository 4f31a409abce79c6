"""Slow end-to-end acceptance checks, run outside the unit suite.

    python -m mlops.acceptance --out runs/acceptance [--only overfit matrix ...]

Prints a JSON summary and exits non-zero if any selected check fails.
"""

import argparse
import itertools
import json
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np
import pytest

from backend.app.integrations import frame_io
from backend.app.ml.quality import cdc, mse_mabd
from backend.app.ml.underwater import gen_procedural_clip
from backend.app.ml.uvenet import init_params
from backend.app.models.dataset import SplitTag, SynthConfig
from backend.app.models.network import Aggregation, ModelConfig
from backend.app.models.training import TrainConfig, tiny_preset
from backend.app.services.enhance_service import enhance_frames
from backend.app.services.synth_service import SynthService
from backend.app.services.training_service import TrainingService


logger = logging.getLogger(__name__)

OVERFIT_MAX_L1 = 0.02
OVERFIT_MIN_GAIN_DB = 6.0

MATRIX_T = (1, 3, 5, 7)
MATRIX_FAAM = ((), (0,), (3,), (0, 1, 2), (0, 1, 2, 3))
MATRIX_SHIFT = (1, 2, 3, 4)
MATRIX_DIMS = [16, 32, 64, 128]

ORACLE_SWEEPS = (
    "tests/test_tensor_ops.py::test_ops_match_oracles_on_random_inputs",
    "tests/test_quality_metrics.py::test_metrics_match_oracles_on_random_inputs",
)


def _dataset(out: Path, clips: int, frames: int, size: int, motion: int, split_ratio: float = 1.0) -> Path:
    config = SynthConfig(
        out_dir=out, procedural=clips, styles=1, n_frames=frames, height=size, width=size,
        motion=motion, split_ratio=split_ratio,
    )
    return Path(SynthService().synthesize(config).manifest_path)


def _tail_loss(losses, window: int = 20) -> float:
    return float(np.mean([r.loss for r in losses[-window:]]))


def check_overfit(out: Path, iters: int) -> Dict:
    """Tiny preset on one procedural pair: L1 and PSNR gain over the raw input."""
    manifest = _dataset(out / "overfit_data", clips=1, frames=16, size=64, motion=1)
    config = tiny_preset().model_copy(
        update={"manifest_path": manifest, "total_iters": iters, "output_dir": out / "overfit_runs",
                "checkpoint_path": out / "overfit_runs" / "uvenet.uvew", "log_every": 1}
    )
    report = TrainingService().train(TrainConfig.model_validate(config.model_dump()))
    final_l1 = _tail_loss(report.losses)
    gain = report.final_metrics.psnr - report.extra["raw_psnr"]
    return {
        "final_l1": final_l1,
        "psnr_gain_db": gain,
        "first_loss": report.losses[0].loss,
        "passed": final_l1 < OVERFIT_MAX_L1 and gain >= OVERFIT_MIN_GAIN_DB,
    }


def check_static(out: Path) -> Dict:
    """Enhancing a static clip gives identical frames, so CDC and MSE(MABD) vanish."""
    clip = gen_procedural_clip(7, n_frames=6, h=48, w=48, motion=0)
    config = ModelConfig(dims=MATRIX_DIMS, depths=[1, 1, 1, 1], decoder_dim=16, grm_dim=16)
    enhanced = enhance_frames(clip.frames, init_params(config, seed=0), config)
    identical = all(np.array_equal(enhanced[0], f) for f in enhanced[1:])
    flicker = mse_mabd(enhanced, clip.frames)
    consistency = cdc(enhanced)
    return {"identical": identical, "cdc": consistency, "mse_mabd": flicker,
            "passed": identical and consistency == 0.0 and flicker == 0.0}


def check_matrix(out: Path) -> Dict:
    """Every ablation axis combination trains one step and infers the right shape."""
    manifest = _dataset(out / "matrix_data", clips=1, frames=8, size=32, motion=1)
    inputs = [np.random.default_rng(i).uniform(0, 1, size=(40, 40, 3)) for i in range(3)]
    service = TrainingService()
    failures: List[str] = []
    combos = list(itertools.product(MATRIX_T, MATRIX_FAAM, MATRIX_SHIFT, list(Aggregation)))
    for t, scales, shift, aggregation in combos:
        label = f"T={t} faam={list(scales)} l={shift} agg={aggregation.value}"
        try:
            model = ModelConfig(num_frames=t, dims=MATRIX_DIMS, depths=[1, 1, 1, 1], shift_len=shift,
                                faam_scales=list(scales), aggregation=aggregation, decoder_dim=8, grm_dim=8)
            config = TrainConfig(model=model, total_iters=1, batch_size=1, crop_size=32, manifest_path=manifest,
                                 output_dir=out / "matrix_runs", checkpoint_path=out / "matrix_runs" / "m.uvew",
                                 eval_holdout=False, prefetch=0)
            service.train(config)
            outputs = enhance_frames(inputs, init_params(model, seed=0), model)
            if len(outputs) != len(inputs) or any(o.shape != (40, 40, 3) for o in outputs):
                failures.append(f"{label}: bad output shape")
        except Exception as exc:  # collect every failing combination
            failures.append(f"{label}: {exc}")
    return {"combinations": len(combos), "failures": failures, "passed": not failures}


def check_faam_trend(out: Path, iters: int, seeds=(0, 1, 2)) -> Dict:
    """T=5 ends at or below the T=1 training loss in at least two of three seeds."""
    manifest = _dataset(out / "trend_data", clips=1, frames=16, size=64, motion=2)
    wins, rows = 0, []
    for seed in seeds:
        losses = {}
        for t in (1, 5):
            base = tiny_preset()
            config = base.model_copy(update={
                "model": base.model.model_copy(update={"num_frames": t}),
                "manifest_path": manifest, "total_iters": iters, "seed": seed, "log_every": 1,
                "eval_holdout": False, "output_dir": out / "trend_runs",
                "checkpoint_path": out / "trend_runs" / f"t{t}_s{seed}.uvew",
            })
            report = TrainingService().train(TrainConfig.model_validate(config.model_dump()))
            losses[t] = _tail_loss(report.losses)
        wins += losses[5] <= losses[1]
        rows.append({"seed": seed, "t1": losses[1], "t5": losses[5]})
    return {"runs": rows, "wins": wins, "passed": wins >= 2}


def check_oracles() -> Dict:
    """Seeded randomized sweeps of the ops and metrics against nested-loop oracles."""
    exit_code = pytest.main(["-q", *ORACLE_SWEEPS])
    return {"sweeps": list(ORACLE_SWEEPS), "exit_code": int(exit_code), "passed": exit_code == 0}


def check_dataset(out: Path) -> Dict:
    """280 clips, 220/60 split, three styles: 660 train and 180 test pairs without leakage."""
    started = time.perf_counter()
    response = SynthService().synthesize(
        SynthConfig(out_dir=out / "suve", procedural=280, styles=3, split_ratio=220 / 280, n_frames=16)
    )
    manifest = response.manifest
    train_ids = {e.clip_id for e in manifest.select(SplitTag.train)}
    test_ids = {e.clip_id for e in manifest.select(SplitTag.test)}
    first = manifest.entries[0]
    stored = frame_io.read_frames(out / "suve" / first.underwater_path)
    return {
        "counts": response.counts,
        "leakage": sorted(train_ids & test_ids),
        "frames_per_clip": len(stored),
        "seconds": round(time.perf_counter() - started, 1),
        "passed": response.counts == {"train": 660, "test": 180} and not (train_ids & test_ids),
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", type=Path, default=Path("runs/acceptance"))
    parser.add_argument("--iters", type=int, default=2000)
    parser.add_argument("--trend-iters", type=int, default=500)
    parser.add_argument("--only", nargs="*", default=None)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    checks: Dict[str, Callable[[], Dict]] = {
        "overfit": lambda: check_overfit(args.out, args.iters),
        "oracles": check_oracles,
        "static": lambda: check_static(args.out),
        "matrix": lambda: check_matrix(args.out),
        "faam_trend": lambda: check_faam_trend(args.out, args.trend_iters),
        "dataset": lambda: check_dataset(args.out),
    }
    selected = args.only or list(checks)
    summary = {}
    for name in selected:
        logger.info("Running acceptance check %s", name)
        started = time.perf_counter()
        summary[name] = {**checks[name](), "elapsed_s": round(time.perf_counter() - started, 1)}
    print(json.dumps(summary, indent=2, default=str))
    return 0 if all(result["passed"] for result in summary.values()) else 1


if __name__ == "__main__":
    sys.exit(main())

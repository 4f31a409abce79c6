"""MLflow experiment tracking for training runs."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Optional

import mlflow

from ..models.training import RunReport, TrainConfig


logger = logging.getLogger(__name__)

DEFAULT_EXPERIMENT = "uvenet"


def run_params(config: TrainConfig) -> Dict[str, str | int | float | bool]:
    model = config.model
    return {
        "lr0": config.lr0,
        "eta_min": config.eta_min,
        "total_iters": config.total_iters,
        "batch_size": config.batch_size,
        "crop_size": config.crop_size,
        "seed": config.seed,
        "hflip": config.augment.hflip,
        "rot90": config.augment.rot90,
        "num_frames": model.num_frames,
        "shift_len": model.shift_len,
        "aggregation": model.aggregation.value,
        "faam_scales": ",".join(str(s) for s in model.faam_scales),
        "dims": ",".join(str(d) for d in model.dims),
        "depths": ",".join(str(d) for d in model.depths),
        "use_grm": model.use_grm,
    }


def log_training_run(
    report: RunReport,
    tracking_uri: Optional[str] = None,
    experiment: str = DEFAULT_EXPERIMENT,
) -> str:
    if tracking_uri:
        mlflow.set_tracking_uri(tracking_uri)
    mlflow.set_experiment(experiment)

    with mlflow.start_run(run_name=report.run_id) as active:
        mlflow.log_params(run_params(report.config))
        for record in report.losses:
            mlflow.log_metric("train_l1", record.loss, step=record.iteration)
            mlflow.log_metric("lr", record.lr, step=record.iteration)
        mlflow.log_metric("wall_time_s", report.wall_time_s)
        if report.final_metrics is not None:
            for key, value in report.final_metrics.summary_row().items():
                if key != "video":
                    mlflow.log_metric(f"holdout_{key}", float(value))
        for key, value in report.extra.items():
            mlflow.log_metric(key, value)
        checkpoint = Path(report.checkpoint_path)
        if checkpoint.exists():
            mlflow.log_artifact(str(checkpoint))
        run_id = active.info.run_id

    logger.info("Logged training run %s to MLflow experiment %s (mlflow run %s)", report.run_id, experiment, run_id)
    return run_id

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional, Sequence

import pandas as pd
from pydantic import BaseModel

from ..models.metrics import VideoMetrics
from ..models.training import LossRecord


METRIC_COLUMNS = ["psnr", "ssim", "uiqm", "uciqe", "mse_mabd", "cdc"]


def metrics_frame(videos: Sequence[VideoMetrics]) -> pd.DataFrame:
    """One row per video; reference columns appear only when some video has them."""
    df = pd.DataFrame([v.summary_row() for v in videos])
    columns = ["video"] + [c for c in METRIC_COLUMNS if c in df.columns]
    return df[columns]


def save_csv(df: pd.DataFrame, path: str | Path, index: bool = False) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(target, index=index)
    return target


def load_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(Path(path))


def save_json(payload: BaseModel | Iterable[BaseModel], path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(payload, BaseModel):
        target.write_text(payload.model_dump_json(indent=2))
    else:
        target.write_text(json.dumps([item.model_dump(mode="json") for item in payload], indent=2))
    return target


def save_metrics(
    videos: Sequence[VideoMetrics],
    output_dir: str | Path,
    table: Optional[pd.DataFrame] = None,
    stem: str = "metrics",
) -> tuple[Path, Path]:
    """Full per-frame detail as JSON, one summary row per video as CSV."""
    out = Path(output_dir)
    json_path = save_json(videos, out / f"{stem}.json")
    csv_path = save_csv(metrics_frame(videos) if table is None else table, out / f"{stem}.csv")
    return json_path, csv_path


def loss_frame(losses: Sequence[LossRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in losses], columns=["iteration", "loss", "lr"])

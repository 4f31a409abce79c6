from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from .dataset import DatasetManifest
from .metrics import VideoMetrics


class SynthResponse(BaseModel):
    manifest_path: str
    counts: Dict[str, int]
    manifest: DatasetManifest


class EnhanceRequest(BaseModel):
    checkpoint_path: Path
    input_dir: Path
    output_dir: Path
    parallel: bool = False


class EnhanceResponse(BaseModel):
    output_dir: str
    frames: int
    paths: List[str]


class EvaluateRequest(BaseModel):
    enhanced_dir: Path
    gt_dir: Optional[Path] = None
    baseline_dir: Optional[Path] = None
    output_dir: Path = Field(default=Path("runs/eval"))
    name: str = "enhanced"


class EvaluateResponse(BaseModel):
    metrics: List[VideoMetrics]
    json_path: str
    csv_path: str


class GradcheckRequest(BaseModel):
    seed: int = 0
    include_model: bool = True

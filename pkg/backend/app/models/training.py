from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from .metrics import VideoMetrics
from .network import ModelConfig


class AugmentConfig(BaseModel):
    hflip: bool = True
    rot90: bool = True


class TrainConfig(BaseModel):
    model: ModelConfig = Field(default_factory=ModelConfig)
    lr0: float = Field(4e-4, gt=0.0)
    eta_min: float = Field(0.0, ge=0.0)
    total_iters: int = Field(2000, ge=0)
    batch_size: int = Field(4, ge=1)
    crop_size: int = 64
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    seed: int = 0
    manifest_path: Optional[Path] = None
    checkpoint_path: Path = Path("runs/uvenet.uvew")
    output_dir: Path = Path("runs")
    log_every: int = Field(10, ge=1)
    # 0 disables intermediate checkpoints
    checkpoint_every: int = Field(0, ge=0)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    prefetch: int = Field(2, ge=0, description="Batches prepared ahead by the loader thread")
    eval_holdout: bool = True

    @field_validator("crop_size")
    @classmethod
    def _multiple_of_32(cls, value: int) -> int:
        if value < 32 or value % 32:
            raise ValueError(f"crop_size must be a positive multiple of 32, got {value}")
        return value


def tiny_preset() -> TrainConfig:
    return TrainConfig(
        model=ModelConfig(dims=[16, 32, 64, 128], depths=[1, 1, 2, 1], decoder_dim=16, grm_dim=16),
        total_iters=2000,
        batch_size=4,
        crop_size=64,
    )


def reference_preset() -> TrainConfig:
    """Full-size schedule: 80K iterations, batch 16, 256 crops. Documented, not desk-runnable."""
    return TrainConfig(
        model=ModelConfig(),
        total_iters=80000,
        batch_size=16,
        crop_size=256,
        log_every=100,
        checkpoint_every=5000,
    )


TRAIN_PRESETS = {
    "tiny": tiny_preset,
    "paper": reference_preset,
}


class LossRecord(BaseModel):
    iteration: int
    loss: float
    lr: float


class RunReport(BaseModel):
    run_id: str
    losses: List[LossRecord]
    wall_time_s: float
    final_metrics: Optional[VideoMetrics] = None
    config: TrainConfig
    version: str
    git_commit: Optional[str] = None
    checkpoint_path: str
    extra: Dict[str, float] = Field(default_factory=dict)

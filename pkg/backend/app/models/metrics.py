from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class FrameMetrics(BaseModel):
    index: int
    psnr: Optional[float] = None
    ssim: Optional[float] = Field(default=None, ge=-1.0, le=1.0)
    uiqm: float
    uciqe: float


class VideoMetrics(BaseModel):
    name: str = "video"
    frames: List[FrameMetrics]
    psnr: Optional[float] = None
    ssim: Optional[float] = None
    uiqm: float
    uciqe: float
    mse_mabd: Optional[float] = None
    cdc: Optional[float] = Field(default=None, ge=0.0)

    def summary_row(self) -> Dict[str, float | str]:
        row: Dict[str, float | str] = {"video": self.name}
        for key in ("psnr", "ssim", "uiqm", "uciqe", "mse_mabd", "cdc"):
            value = getattr(self, key)
            if value is not None:
                row[key] = value
        return row

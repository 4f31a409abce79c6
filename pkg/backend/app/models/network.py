from __future__ import annotations

from enum import Enum
from typing import List, Literal

from pydantic import BaseModel, Field, field_validator, model_validator


class Aggregation(str, Enum):
    depthwise_only = "depthwise_only"
    pointwise_only = "pointwise_only"
    dsc = "dsc"
    dsc_ca = "dsc_ca"


class ModelConfig(BaseModel):
    # window size T = 2k + 1
    num_frames: int = Field(5, ge=1, description="Odd number of input frames per window")
    dims: List[int] = Field(default_factory=lambda: [96, 192, 384, 768])
    depths: List[int] = Field(default_factory=lambda: [3, 3, 9, 3])
    shift_len: int = Field(3, ge=0, description="Base shift length l in pixels")
    faam_scales: List[int] = Field(default_factory=lambda: [0, 1, 2, 3])
    aggregation: Aggregation = Aggregation.dsc_ca
    decoder_dim: int = Field(96, ge=1)
    grm_dim: int = Field(64, ge=1)
    stem_stride: Literal[4] = 4
    use_grm: bool = True

    @field_validator("num_frames")
    @classmethod
    def _odd_window(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"num_frames must be odd, got {value}")
        return value

    @field_validator("faam_scales")
    @classmethod
    def _known_scales(cls, value: List[int]) -> List[int]:
        if any(s not in (0, 1, 2, 3) for s in value):
            raise ValueError(f"faam_scales must be a subset of {{0, 1, 2, 3}}, got {value}")
        return sorted(set(value))

    @field_validator("depths")
    @classmethod
    def _four_stages(cls, value: List[int]) -> List[int]:
        if len(value) != 4 or any(d < 0 for d in value):
            raise ValueError(f"depths must be four non-negative block counts, got {value}")
        return value

    @model_validator(mode="after")
    def _check_dims(self) -> "ModelConfig":
        if len(self.dims) != 4:
            raise ValueError(f"dims must list four channel counts, got {self.dims}")
        for s, dim in enumerate(self.dims):
            if dim % 8:
                raise ValueError(f"dims[{s}]={dim} must be divisible by 8 for the grouped shift")
            if self.aggregation == Aggregation.dsc_ca and dim % 16:
                raise ValueError(f"dims[{s}]={dim} must be divisible by 16 for the channel-attention bottleneck")
        for s in range(3):
            if self.dims[s + 1] != 2 * self.dims[s]:
                raise ValueError(f"dims must double per scale, got {self.dims}")
        return self

    @property
    def center(self) -> int:
        return self.num_frames // 2

from __future__ import annotations

from collections import defaultdict
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator


class WaterParams(BaseModel):
    """Per-clip-constant degradation: attenuation (1/m) and background light per RGB channel."""

    beta: Tuple[float, float, float]
    background: Tuple[float, float, float]
    preset: Optional[str] = None

    @field_validator("beta")
    @classmethod
    def _non_negative(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(b < 0 for b in value):
            raise ValueError(f"attenuation must be non-negative, got {value}")
        return value

    @field_validator("background")
    @classmethod
    def _unit_range(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(not 0.0 <= b <= 1.0 for b in value):
            raise ValueError(f"background light must lie in [0, 1], got {value}")
        return value


class SplitTag(str, Enum):
    train = "train"
    test = "test"


class ManifestEntry(BaseModel):
    clip_id: str
    clean_path: str
    underwater_path: str
    water: WaterParams
    split: SplitTag
    style: int = Field(..., ge=1)


class DatasetManifest(BaseModel):
    seed: int
    styles_per_clip: int = Field(3, ge=1)
    entries: List[ManifestEntry]

    @model_validator(mode="after")
    def _consistent(self) -> "DatasetManifest":
        styles: dict[str, list[int]] = defaultdict(list)
        splits: dict[str, set[str]] = defaultdict(set)
        for entry in self.entries:
            styles[entry.clip_id].append(entry.style)
            splits[entry.clip_id].add(entry.split.value)
        expected = list(range(1, self.styles_per_clip + 1))
        for clip_id, found in styles.items():
            if sorted(found) != expected:
                raise ValueError(f"clip {clip_id} has styles {sorted(found)}, expected {expected}")
            if len(splits[clip_id]) != 1:
                raise ValueError(f"clip {clip_id} appears in both train and test splits")
        return self

    def select(self, split: SplitTag | str) -> List[ManifestEntry]:
        tag = SplitTag(split)
        return [e for e in self.entries if e.split == tag]

    def counts(self) -> dict[str, int]:
        return {tag.value: len(self.select(tag)) for tag in SplitTag}


class SynthConfig(BaseModel):
    out_dir: Path = Path("data/suve")
    procedural: int = Field(0, ge=0, description="Number of procedural clean clips to generate")
    clean_dir: Optional[Path] = None
    styles: int = Field(3, ge=1)
    split_ratio: float = Field(220 / 280, gt=0.0, le=1.0, description="Fraction of clean clips assigned to train")
    n_frames: int = Field(16, ge=1)
    height: int = Field(64, ge=1)
    width: int = Field(64, ge=1)
    motion: int = Field(1, ge=0)
    crop: Optional[Tuple[int, int]] = None
    seed: int = 0

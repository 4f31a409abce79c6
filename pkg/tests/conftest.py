from pathlib import Path

import numpy as np
import pytest

from backend.app.core.config import get_settings
from backend.app.models.dataset import SynthConfig
from backend.app.models.network import Aggregation, ModelConfig
from backend.app.services.synth_service import SynthService


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(
        num_frames=5,
        dims=[8, 16, 32, 64],
        depths=[1, 1, 1, 1],
        shift_len=3,
        aggregation=Aggregation.dsc,
        decoder_dim=8,
        grm_dim=8,
    )


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch: pytest.MonkeyPatch):
    monkeypatch.delenv("UVE_THREADS", raising=False)
    monkeypatch.delenv("UVE_MLFLOW_TRACKING_URI", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Two procedural clips (one train, one test), 8 frames of 32x32, one style each."""
    out = tmp_path_factory.mktemp("suve")
    config = SynthConfig(out_dir=out, procedural=2, styles=1, split_ratio=0.5, n_frames=8, height=32, width=32, seed=3)
    response = SynthService().synthesize(config)
    return Path(response.manifest_path)

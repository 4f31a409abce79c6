import logging
from pathlib import Path
from typing import List, Sequence

from ..core.errors import DatasetError
from ..ml.underwater import CleanClip, ProceduralClips, build_dataset, load_clean_clip
from ..models.dataset import SynthConfig
from ..models.jobs import SynthResponse
from .store import store


logger = logging.getLogger(__name__)


class SynthService:
    def collect_clips(self, config: SynthConfig) -> Sequence[CleanClip]:
        procedural = ProceduralClips(
            config.procedural, config.seed, config.n_frames, config.height, config.width, config.motion
        )
        if config.clean_dir is None:
            if not len(procedural):
                raise DatasetError("nothing to synthesise: pass procedural > 0 or a clean clip directory")
            return procedural

        clip_dirs = sorted(p for p in Path(config.clean_dir).iterdir() if p.is_dir())
        if not clip_dirs and not len(procedural):
            raise DatasetError(f"no clip directories under {config.clean_dir}")
        loaded: List[CleanClip] = [load_clean_clip(d, crop=config.crop) for d in clip_dirs]
        logger.info("Loaded %d clean clips from %s", len(loaded), config.clean_dir)
        return [*procedural, *loaded]

    def synthesize(self, config: SynthConfig) -> SynthResponse:
        clips = self.collect_clips(config)
        manifest = build_dataset(
            clips,
            styles_per_clip=config.styles,
            split_ratio=config.split_ratio,
            seed=config.seed,
            out_dir=config.out_dir,
        )
        response = SynthResponse(
            manifest_path=str(Path(config.out_dir) / "manifest.json"),
            counts=manifest.counts(),
            manifest=manifest,
        )
        with store.lock:
            store.datasets[response.manifest_path] = response
        return response

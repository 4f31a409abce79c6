"""Train the tiny UVENet preset on a procedural dataset and track it in MLflow."""

import argparse
from pathlib import Path

from backend.app.core.config import get_settings
from backend.app.integrations.tracking import log_training_run
from backend.app.models.dataset import SynthConfig
from backend.app.models.training import TRAIN_PRESETS, RunReport
from backend.app.services.synth_service import SynthService
from backend.app.services.training_service import TrainingService


def train_tracked(
    preset: str = "tiny",
    data_dir: Path = Path("data/tiny_suve"),
    runs_dir: Path = Path("runs/tiny"),
    clips: int = 4,
    iters: int | None = None,
    seed: int = 0,
) -> RunReport:
    manifest_path = data_dir / "manifest.json"
    if not manifest_path.exists():
        SynthService().synthesize(SynthConfig(out_dir=data_dir, procedural=clips, seed=seed, split_ratio=0.75))

    config = TRAIN_PRESETS[preset]().model_copy(
        update={
            "manifest_path": manifest_path,
            "output_dir": runs_dir,
            "checkpoint_path": runs_dir / f"uvenet_{preset}.uvew",
            "seed": seed,
        }
    )
    if iters is not None:
        config = config.model_copy(update={"total_iters": iters})
    config = type(config).model_validate(config.model_dump())

    report = TrainingService().train(config)
    settings = get_settings()
    # the service already logs when a tracking URI is configured
    if not settings.mlflow_tracking_uri:
        log_training_run(report, tracking_uri=None, experiment=f"uvenet_{preset}")
    return report


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", default="tiny", choices=sorted(TRAIN_PRESETS))
    parser.add_argument("--clips", type=int, default=4)
    parser.add_argument("--iters", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    report = train_tracked(preset=args.preset, clips=args.clips, iters=args.iters, seed=args.seed)
    print({"run_id": report.run_id, "final_loss": report.losses[-1].loss if report.losses else None})


if __name__ == "__main__":
    main()

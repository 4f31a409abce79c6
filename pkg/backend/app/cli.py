"""Command line entry point: ``python -m backend.app.cli <synth|train|enhance|evaluate|gradcheck>``.

Every subcommand takes ``--config <json>`` (validated against its pydantic
schema) and ``--seed``; remaining flags override individual config fields.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Type, TypeVar

from pydantic import BaseModel, ValidationError

from .core.config import get_settings
from .core.errors import UVEError
from .models.dataset import SynthConfig
from .models.jobs import EnhanceRequest, EvaluateRequest
from .models.network import Aggregation
from .models.training import TRAIN_PRESETS, TrainConfig
from .services.enhance_service import EnhanceService
from .services.evaluation_service import EvaluationService
from .services.gradcheck_service import GradcheckService
from .services.synth_service import SynthService
from .services.training_service import TrainingService


logger = logging.getLogger(__name__)

EXIT_ERROR = 1
EXIT_GRADCHECK_FAILED = 2

M = TypeVar("M", bound=BaseModel)


def load_config(model: Type[M], path: Optional[Path], base: Optional[M] = None) -> M:
    if path is not None:
        return model.model_validate_json(Path(path).read_text())
    return base if base is not None else model()


def apply_overrides(config: M, overrides: Dict[str, Any]) -> M:
    """Merge non-None overrides (nested dicts merge one level) and re-validate."""
    data = config.model_dump()
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            nested = {k: v for k, v in value.items() if v is not None}
            data[key] = {**data.get(key, {}), **nested}
        else:
            data[key] = value
    return type(config).model_validate(data)


def _emit(payload: Any) -> None:
    print(json.dumps(payload, indent=2, default=str))


# --- subcommands ----------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    settings = get_settings()
    config = load_config(SynthConfig, args.config, SynthConfig(out_dir=settings.data_dir / "suve"))
    config = apply_overrides(
        config,
        {
            "seed": args.seed,
            "out_dir": args.out,
            "procedural": args.procedural,
            "clean_dir": args.clean_dir,
            "styles": args.styles,
            "split_ratio": args.split_ratio,
            "n_frames": args.frames,
            "height": args.height,
            "width": args.width,
            "motion": args.motion,
            "crop": args.crop,
        },
    )
    response = SynthService().synthesize(config)
    _emit({"manifest": response.manifest_path, "counts": response.counts})
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    settings = get_settings()
    base = TRAIN_PRESETS[args.preset]()
    base = apply_overrides(
        base,
        {"output_dir": settings.runs_dir, "checkpoint_path": settings.runs_dir / "uvenet.uvew"},
    )
    config = load_config(TrainConfig, args.config, base)
    config = apply_overrides(
        config,
        {
            "seed": args.seed,
            "manifest_path": args.manifest,
            "total_iters": args.iters,
            "batch_size": args.batch_size,
            "crop_size": args.crop_size,
            "lr0": args.lr0,
            "checkpoint_path": args.checkpoint,
            "output_dir": args.output_dir,
            "log_every": args.log_every,
            "checkpoint_every": args.checkpoint_every,
            "model": {
                "num_frames": args.frames,
                "shift_len": args.shift_len,
                "aggregation": args.aggregation,
                "faam_scales": args.faam_scales,
                "use_grm": False if args.no_grm else None,
            },
        },
    )
    report = TrainingService().train(config)
    summary = {
        "run_id": report.run_id,
        "checkpoint": report.checkpoint_path,
        "final_loss": report.losses[-1].loss if report.losses else None,
        "wall_time_s": round(report.wall_time_s, 2),
    }
    if report.final_metrics is not None:
        summary["holdout"] = report.final_metrics.summary_row()
    _emit(summary)
    return 0


def cmd_enhance(args: argparse.Namespace) -> int:
    data: Dict[str, Any] = {}
    if args.config is not None:
        data = json.loads(Path(args.config).read_text())
    overrides = {"checkpoint_path": args.checkpoint, "input_dir": args.input, "output_dir": args.output}
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.parallel:
        data["parallel"] = True
    response = EnhanceService().enhance(EnhanceRequest.model_validate(data))
    _emit({"output_dir": response.output_dir, "frames": response.frames})
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    data: Dict[str, Any] = {}
    if args.config is not None:
        data = json.loads(Path(args.config).read_text())
    overrides = {
        "enhanced_dir": args.enhanced,
        "gt_dir": args.gt,
        "baseline_dir": args.baseline,
        "output_dir": args.output,
        "name": args.name,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    response = EvaluationService().evaluate(EvaluateRequest.model_validate(data))
    _emit({"json": response.json_path, "csv": response.csv_path, "videos": [m.summary_row() for m in response.metrics]})
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    seed = args.seed
    if args.config is not None:
        seed = json.loads(Path(args.config).read_text()).get("seed", seed)
    report = GradcheckService().run(seed=seed or 0, include_model=not args.skip_model)
    print(report.format_table())
    if not report.passed:
        logger.error("Gradient check failed for: %s", ", ".join(report.failures))
        return EXIT_GRADCHECK_FAILED
    return 0


# --- parser ---------------------------------------------------------------


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uve", description="Underwater video enhancement toolkit")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="synthesise paired underwater/clean clips")
    _common(synth)
    synth.add_argument("--procedural", type=int, default=None, help="generate N procedural clean clips")
    synth.add_argument("--clean-dir", type=Path, default=None, help="directory of <clip>/frames + <clip>/depth")
    synth.add_argument("--styles", type=int, default=None)
    synth.add_argument("--split-ratio", type=float, default=None)
    synth.add_argument("--frames", type=int, default=None)
    synth.add_argument("--height", type=int, default=None)
    synth.add_argument("--width", type=int, default=None)
    synth.add_argument("--motion", type=int, default=None)
    synth.add_argument("--crop", type=int, nargs=2, default=None, metavar=("H", "W"))
    synth.add_argument("--out", type=Path, default=None)
    synth.set_defaults(func=cmd_synth)

    train = sub.add_parser("train", help="train UVENet on a synthesised manifest")
    _common(train)
    train.add_argument("--preset", choices=sorted(TRAIN_PRESETS), default="tiny")
    train.add_argument("--manifest", type=Path, default=None)
    train.add_argument("--iters", type=int, default=None)
    train.add_argument("--batch-size", type=int, default=None)
    train.add_argument("--crop-size", type=int, default=None)
    train.add_argument("--lr0", type=float, default=None)
    train.add_argument("--checkpoint", type=Path, default=None)
    train.add_argument("--output-dir", type=Path, default=None)
    train.add_argument("--log-every", type=int, default=None)
    train.add_argument("--checkpoint-every", type=int, default=None)
    train.add_argument("--frames", type=int, default=None, help="window size T (odd)")
    train.add_argument("--shift-len", type=int, default=None)
    train.add_argument("--aggregation", choices=[a.value for a in Aggregation], default=None)
    train.add_argument("--faam-scales", type=int, nargs="*", default=None)
    train.add_argument("--no-grm", action="store_true")
    train.set_defaults(func=cmd_train)

    enhance = sub.add_parser("enhance", help="sliding-window inference over a frame directory")
    _common(enhance)
    enhance.add_argument("--checkpoint", type=Path, default=None)
    enhance.add_argument("--input", type=Path, default=None)
    enhance.add_argument("--output", type=Path, default=None)
    enhance.add_argument("--parallel", action="store_true")
    enhance.set_defaults(func=cmd_enhance)

    evaluate = sub.add_parser("evaluate", help="score enhanced frames")
    _common(evaluate)
    evaluate.add_argument("--enhanced", type=Path, default=None)
    evaluate.add_argument("--gt", type=Path, default=None)
    evaluate.add_argument("--baseline", type=Path, default=None, help="raw underwater frames to score alongside")
    evaluate.add_argument("--output", type=Path, default=None)
    evaluate.add_argument("--name", default=None)
    evaluate.set_defaults(func=cmd_evaluate)

    gradcheck = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    _common(gradcheck)
    gradcheck.add_argument("--skip-model", action="store_true", help="only check individual ops")
    gradcheck.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or get_settings().log_level).upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    handler: Callable[[argparse.Namespace], int] = args.func
    try:
        return handler(args)
    except (UVEError, ValidationError, OSError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

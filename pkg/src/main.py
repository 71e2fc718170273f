import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.config import Settings, get_settings
from src.exceptions import (
    CheckpointException,
    ConfigurationError,
    DatasetException,
    GroupingException,
    ModelException,
    NNCoreException,
    PipelineException,
    ProxException,
)
from src.repositories.checkpoint import CHECKPOINT_FILENAME, STAGE_DIRS, Checkpoint, load_checkpoint
from src.schemas.training.stage import StageTag
from src.services.data import save_features
from src.services.data.factory import make_dataset
from src.services.pipeline import collect_summaries, evaluate, format_table, write_table
from src.services.pipeline.factory import make_stage_pipeline

logger = logging.getLogger(__name__)

DOMAIN_ERRORS = (
    NNCoreException,
    GroupingException,
    ProxException,
    ModelException,
    DatasetException,
    CheckpointException,
    PipelineException,
    ConfigurationError,
)

FEATURES_FILENAME = "features.bin"

STAGE_FLAGS = ("method", "lam", "beta", "mu", "rho", "lr", "lr_drop_epoch", "epochs", "batch_size", "seed")
STAGE_COMMANDS = ("stage1", "stage2", "stage3")
ALL_SECTIONS = ("baseline", "stage1", "stage2", "stage3")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="channeltrim",
        description="Channel pruning and binarization of a keyword-spotting CNN in three training stages.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value settings file (e.g. STAGE1__LAM=0.05); flags override it")
    common.add_argument("--out", help="run directory (gen-data: directory of the feature file)")
    common.add_argument("--data", help="feature file; synthetic data is generated when omitted")
    common.add_argument("--checkpoint", help="input checkpoint")
    common.add_argument("--seed", type=int)

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--method", choices=["gl", "rgsm", "gsbc", "bc", "blended_bc", "sgd"])
    training.add_argument("--lambda", dest="lam", type=float)
    training.add_argument("--beta", type=float)
    training.add_argument("--mu", type=float)
    training.add_argument("--rho", type=float)
    training.add_argument("--lr", type=float)
    training.add_argument("--lr-drop-epoch", type=int)
    training.add_argument("--epochs", type=int)
    training.add_argument("--batch-size", type=int)

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("gen-data", parents=[common], help="write the synthetic dataset as a feature file")
    commands.add_parser("stage1", parents=[common, training], help="channel pruning from a cold start")
    commands.add_parser("stage2", parents=[common, training], help="float retraining under the frozen mask")
    commands.add_parser("stage3", parents=[common, training], help="binarization with warm start")
    pipeline = commands.add_parser("pipeline", parents=[common, training], help="baseline and all three stages")
    pipeline.add_argument("--skip-baseline", action="store_true")
    commands.add_parser("eval", parents=[common], help="validation accuracy of a checkpoint")
    commands.add_parser("report", parents=[common], help="collect the stage summaries of a run into table.json")
    return parser


def _stage_values(args: argparse.Namespace, exclude: tuple = ()) -> Dict[str, Any]:
    return {
        flag: getattr(args, flag)
        for flag in STAGE_FLAGS
        if flag not in exclude and getattr(args, flag, None) is not None
    }


def settings_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Translate CLI flags into nested settings overrides.

    Training flags target the stage the command runs. For ``pipeline`` they
    target Stage I, except --rho which targets Stage III; --seed and
    --batch-size apply to every stage.
    """
    overrides: Dict[str, Any] = {}
    if args.out:
        overrides["output_dir"] = args.out
    if args.data:
        overrides["data"] = {"path": args.data}
    if args.seed is not None:
        overrides["model"] = {"seed": args.seed}
        if args.command == "gen-data":
            overrides["data"] = {**overrides.get("data", {}), "seed": args.seed}

    if args.command in STAGE_COMMANDS:
        overrides[args.command] = _stage_values(args)
    elif args.command == "pipeline":
        shared = {key: value for key, value in _stage_values(args).items() if key in ("seed", "batch_size")}
        for section in ALL_SECTIONS:
            overrides[section] = dict(shared)
        overrides["stage1"].update(_stage_values(args, exclude=("rho",)))
        if args.rho is not None:
            overrides["stage3"]["rho"] = args.rho
    return overrides


def _print(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, sort_keys=True))


def _stage_checkpoint(args: argparse.Namespace, settings: Settings, previous: StageTag) -> Checkpoint:
    path = Path(args.checkpoint) if args.checkpoint else Path(settings.output_dir) / STAGE_DIRS[previous] / CHECKPOINT_FILENAME
    return load_checkpoint(path)


def run_command(args: argparse.Namespace, settings: Settings) -> Dict[str, Any]:
    command = args.command
    if command == "report":
        summaries = collect_summaries(settings.output_dir)
        if not summaries:
            raise PipelineException(f"no stage summaries under {settings.output_dir}")
        print(format_table(summaries), file=sys.stderr)
        return {"table": str(write_table(summaries, settings.output_dir)), "rows": len(summaries)}

    dataset = make_dataset(settings.data)
    if command == "gen-data":
        path = save_features(dataset, Path(settings.output_dir) / FEATURES_FILENAME)
        return {"path": str(path), "examples": len(dataset), "num_classes": dataset.num_classes}
    if command == "eval":
        if not args.checkpoint:
            raise ConfigurationError("eval needs --checkpoint")
        checkpoint = load_checkpoint(args.checkpoint)
        return {"accuracy": evaluate(checkpoint, dataset), "stage": checkpoint.stage.value}

    pipeline = make_stage_pipeline(settings)
    if command == "pipeline":
        return pipeline.run(dataset, include_baseline=not args.skip_baseline)
    if command == "stage1":
        _, report = pipeline.stage1(dataset)
    elif command == "stage2":
        _, report = pipeline.stage2(dataset, _stage_checkpoint(args, settings, StageTag.ONE))
    else:
        _, report = pipeline.stage3(dataset, _stage_checkpoint(args, settings, StageTag.TWO))
    return {
        "stage": report.stage.value,
        "accuracy": report.final_accuracy,
        "channel_sparsity": report.final_sparsity,
        "out": str(pipeline.repository.stage_dir(report.stage)),
    }


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = get_settings(args.config, **settings_overrides(args))
        logging.basicConfig(
            level=getattr(logging, settings.log_level.upper(), logging.INFO),
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        )
        _print(run_command(args, settings))
    except DOMAIN_ERRORS as e:
        logger.error(f"{args.command} failed: {e}")
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

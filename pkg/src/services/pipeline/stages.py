"""The training stages: float baseline, channel pruning, masked retraining, binarization."""

import logging
from typing import Optional, Tuple

from src.exceptions import DimensionError, MissingMaskError, StageConfigError
from src.models import Model, apply_mask, build_model, channel_bars, mask_from_weights
from src.repositories.checkpoint import Checkpoint
from src.schemas.model.config import ModelConfig
from src.schemas.sparsity.groups import ChannelMask
from src.schemas.training.stage import (
    BINARY_METHODS,
    METHOD_LABELS,
    PRUNING_METHODS,
    Method,
    StageConfig,
    StageReport,
    StageTag,
    SummaryRow,
)
from src.services.data import Dataset

from .strategies import GL_ZERO_TOLERANCE, make_strategy
from .trainer import Trainer, accuracy

logger = logging.getLogger(__name__)

BASELINE_LABEL = "Float baseline"


def check_compatible(config: ModelConfig, dataset: Dataset) -> None:
    if (dataset.t, dataset.f) != (config.t, config.f) or dataset.num_classes != config.num_classes:
        raise DimensionError(
            f"model expects {config.t}x{config.f} inputs and {config.num_classes} classes, "
            f"dataset has {dataset.t}x{dataset.f} and {dataset.num_classes}"
        )


def summary_label(stage: StageTag, method: Method, pruning: Optional[StageConfig] = None) -> str:
    if stage == StageTag.BASELINE:
        return BASELINE_LABEL
    if stage == StageTag.ONE or pruning is None:
        return METHOD_LABELS[method]
    pruned = METHOD_LABELS[pruning.method]
    if stage == StageTag.TWO:
        return f"{pruned}, float retrained"
    return f"{pruned}, {METHOD_LABELS[method]}"


def _train(
    model: Model,
    config: StageConfig,
    dataset: Dataset,
    stage: StageTag,
    pruning: Optional[StageConfig],
) -> Tuple[Model, StageReport, bytes]:
    strategy = make_strategy(model, config)
    trainer = Trainer(strategy, config, dataset, label=f"stage {stage.value} {config.method.value}")
    logger.info(f"Stage {stage.value}: {config.method.value} for {config.epochs} epochs")
    rows = trainer.fit()
    trained = model.with_params(strategy.effective_params())

    # β, λ, μ columns name the pruned model the stage descends from.
    source = pruning if pruning is not None else config
    last = rows[-1]
    summary = SummaryRow(
        label=summary_label(stage, config.method, pruning),
        beta=source.beta,
        lam=source.lam,
        mu=source.mu,
        accuracy=last.val_accuracy,
        channel_sparsity=last.channel_sparsity,
    )
    report = StageReport(stage=stage, method=config.method, rows=rows, summary=summary)
    return trained, report, trainer.rng_state


def _finish(report: StageReport, mask: Optional[ChannelMask]) -> StageReport:
    if mask is None:
        return report
    return report.model_copy(update={"channel_bars": channel_bars(mask)})


def run_baseline(config: StageConfig, dataset: Dataset, model_config: ModelConfig) -> Tuple[Checkpoint, StageReport]:
    """Unpruned float network trained by SGD from a cold start."""
    if config.method != Method.SGD:
        raise StageConfigError(f"the baseline trains with sgd, got {config.method.value}")
    check_compatible(model_config, dataset)
    model, report, rng_state = _train(build_model(model_config), config, dataset, StageTag.BASELINE, None)
    checkpoint = Checkpoint(
        config=model_config,
        tensors=model.params,
        stage=StageTag.BASELINE,
        stage_config=config,
        rng_state=rng_state,
    )
    return checkpoint, report


def run_stage1(config: StageConfig, dataset: Dataset, model_config: ModelConfig) -> Tuple[Checkpoint, StageReport]:
    """Channel pruning from random initialization.

    The mask is read from the group-sparse u for rgsm/gsbc and from the
    near-zero conv2 channel groups of w for gl.
    """
    if config.method not in PRUNING_METHODS:
        raise StageConfigError(f"stage I prunes with gl, rgsm or gsbc, got {config.method.value}")
    check_compatible(model_config, dataset)
    model, report, rng_state = _train(build_model(model_config), config, dataset, StageTag.ONE, None)
    mask = mask_from_weights(model, tol=GL_ZERO_TOLERANCE if config.method == Method.GL else 0.0)
    logger.info(f"Stage I mask: {mask.num_pruned}/{mask.num_channels} channels pruned")
    checkpoint = Checkpoint(
        config=model_config,
        tensors=model.params,
        stage=StageTag.ONE,
        mask=mask,
        stage_config=config,
        pruning_config=config,
        rng_state=rng_state,
    )
    return checkpoint, _finish(report, mask)


def _masked_model(checkpoint: Checkpoint, dataset: Dataset) -> Model:
    if checkpoint.mask is None:
        raise MissingMaskError(f"stage {checkpoint.stage.value} checkpoint carries no channel mask")
    check_compatible(checkpoint.config, dataset)
    return apply_mask(Model(config=checkpoint.config, params=dict(checkpoint.tensors)), checkpoint.mask)


def run_stage2(checkpoint: Checkpoint, config: StageConfig, dataset: Dataset) -> Tuple[Checkpoint, StageReport]:
    """Float retraining of the unpruned channels under the frozen Stage I mask."""
    if config.method != Method.SGD:
        raise StageConfigError(f"stage II retrains with sgd, got {config.method.value}")
    model = _masked_model(checkpoint, dataset)
    trained, report, rng_state = _train(model, config, dataset, StageTag.TWO, checkpoint.pruning_config)
    result = Checkpoint(
        config=checkpoint.config,
        tensors=trained.params,
        stage=StageTag.TWO,
        mask=checkpoint.mask,
        stage_config=config,
        pruning_config=checkpoint.pruning_config,
        rng_state=rng_state,
    )
    return result, _finish(report, checkpoint.mask)


def run_stage3(checkpoint: Checkpoint, config: StageConfig, dataset: Dataset) -> Tuple[Checkpoint, StageReport]:
    """Binarization warm-started from the retrained float weights.

    The final weight tensors are scale x sign outside the mask; biases stay float.
    """
    if config.method not in BINARY_METHODS:
        raise StageConfigError(f"stage III binarizes with bc or blended_bc, got {config.method.value}")
    model = _masked_model(checkpoint, dataset)
    trained, report, rng_state = _train(model, config, dataset, StageTag.THREE, checkpoint.pruning_config)
    result = Checkpoint(
        config=checkpoint.config,
        tensors=trained.params,
        stage=StageTag.THREE,
        mask=checkpoint.mask,
        stage_config=config,
        pruning_config=checkpoint.pruning_config,
        rng_state=rng_state,
    )
    return result, _finish(report, checkpoint.mask)


def evaluate(checkpoint: Checkpoint, dataset: Dataset) -> float:
    """Validation top-1 accuracy (percent) of the checkpointed model."""
    check_compatible(checkpoint.config, dataset)
    model = Model(config=checkpoint.config, params=dict(checkpoint.tensors), mask=checkpoint.mask)
    features, labels = dataset.validation()
    return accuracy(model, features, labels)

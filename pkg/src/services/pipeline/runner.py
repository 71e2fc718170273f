import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from src.exceptions import PipelineException
from src.repositories.checkpoint import Checkpoint, CheckpointRepository
from src.schemas.model.config import ModelConfig
from src.schemas.training.stage import StageConfig, StageReport, StageTag
from src.services.data import Dataset

from .report import emit_report, write_mask, write_table
from .stages import run_baseline, run_stage1, run_stage2, run_stage3

logger = logging.getLogger(__name__)


class StagePipeline:
    """
    Runs the training stages and persists their artifacts.

    Every stage writes ``checkpoint.ckpt``, ``report.csv``, ``summary.json`` and,
    once a mask exists, ``mask.json`` into its own directory under the run root:
    1. Baseline: float SGD from a cold start.
    2. Stage I: channel pruning from a cold start.
    3. Stage II: float retraining under the frozen mask.
    4. Stage III: binarization warm-started from Stage II.
    """

    def __init__(
        self,
        model_config: ModelConfig,
        repository: CheckpointRepository,
        baseline_config: Optional[StageConfig] = None,
        stage1_config: Optional[StageConfig] = None,
        stage2_config: Optional[StageConfig] = None,
        stage3_config: Optional[StageConfig] = None,
    ):
        """
        Args:
            model_config (ModelConfig): network shape for the cold-started stages.
            repository (CheckpointRepository): checkpoint store rooted at the run directory.
            baseline_config, stage1_config, stage2_config, stage3_config (Optional[StageConfig]):
                per-stage hyperparameters; a stage without a config cannot be run.
        """
        self.model_config = model_config
        self.repository = repository
        self.configs: Dict[StageTag, Optional[StageConfig]] = {
            StageTag.BASELINE: baseline_config,
            StageTag.ONE: stage1_config,
            StageTag.TWO: stage2_config,
            StageTag.THREE: stage3_config,
        }

    @property
    def root(self) -> Path:
        return self.repository.root

    def _config(self, stage: StageTag) -> StageConfig:
        config = self.configs[stage]
        if config is None:
            raise PipelineException(f"no configuration for stage {stage.value}")
        return config

    def _persist(self, checkpoint: Checkpoint, report: StageReport) -> Dict[str, Path]:
        stage_dir = self.repository.stage_dir(checkpoint.stage)
        paths = dict(emit_report(report, stage_dir))
        paths["checkpoint"] = self.repository.save(checkpoint)
        if checkpoint.mask is not None:
            paths["mask"] = write_mask(checkpoint.mask, stage_dir)
        return paths

    def _previous(self, stage: StageTag, checkpoint: Optional[Checkpoint]) -> Checkpoint:
        return checkpoint if checkpoint is not None else self.repository.load(stage)

    def baseline(self, dataset: Dataset) -> Tuple[Checkpoint, StageReport]:
        checkpoint, report = run_baseline(self._config(StageTag.BASELINE), dataset, self.model_config)
        self._persist(checkpoint, report)
        return checkpoint, report

    def stage1(self, dataset: Dataset) -> Tuple[Checkpoint, StageReport]:
        checkpoint, report = run_stage1(self._config(StageTag.ONE), dataset, self.model_config)
        self._persist(checkpoint, report)
        return checkpoint, report

    def stage2(self, dataset: Dataset, checkpoint: Optional[Checkpoint] = None) -> Tuple[Checkpoint, StageReport]:
        """Retrain from ``checkpoint``, or from the run's Stage I checkpoint when omitted."""
        previous = self._previous(StageTag.ONE, checkpoint)
        result, report = run_stage2(previous, self._config(StageTag.TWO), dataset)
        self._persist(result, report)
        return result, report

    def stage3(self, dataset: Dataset, checkpoint: Optional[Checkpoint] = None) -> Tuple[Checkpoint, StageReport]:
        """Binarize ``checkpoint``, or the run's Stage II checkpoint when omitted."""
        previous = self._previous(StageTag.TWO, checkpoint)
        result, report = run_stage3(previous, self._config(StageTag.THREE), dataset)
        self._persist(result, report)
        return result, report

    def run(self, dataset: Dataset, include_baseline: bool = True) -> Dict[str, Any]:
        """
        Run all stages in order and write the combined ``table.json``.
        Returns:
            Dict[str, Any]: final accuracy and sparsity per stage, the Stage I mask
            and the table path.
        Raises:
            PipelineException: if a later stage ended with a mask other than Stage I's.
        """
        logger.info(f"Starting stage pipeline in {self.root}")
        results: Dict[str, Any] = {"stages": {}}
        reports = []
        step = StageTag.BASELINE
        try:
            if include_baseline:
                _, report = self.baseline(dataset)
                reports.append(report)
            step = StageTag.ONE
            ckpt1, report1 = self.stage1(dataset)
            logger.info(f"Stage I mask: {list(ckpt1.mask.bits) if ckpt1.mask is not None else None}")
            step = StageTag.TWO
            ckpt2, report2 = self.stage2(dataset, ckpt1)
            step = StageTag.THREE
            ckpt3, report3 = self.stage3(dataset, ckpt2)
        except Exception as e:
            logger.error(f"Stage pipeline failed at stage {step.value}: {e}")
            raise
        reports += [report1, report2, report3]

        if not ckpt1.mask == ckpt2.mask == ckpt3.mask:
            logger.error("Channel mask changed between stages")
            raise PipelineException("channel mask changed after stage I")

        for report in reports:
            results["stages"][report.stage.value] = {
                "accuracy": report.final_accuracy,
                "channel_sparsity": report.final_sparsity,
            }
        results["mask"] = list(ckpt1.mask.bits) if ckpt1.mask is not None else None
        results["table"] = str(write_table([report.summary for report in reports], self.root))
        logger.info(f"Pipeline finished: {results['stages']}")
        return results

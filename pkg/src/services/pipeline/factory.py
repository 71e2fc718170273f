"""
Factory module for assembling the stage pipeline from configuration settings.
"""

from pathlib import Path
from typing import Optional, Union

from src.config import Settings, get_settings
from src.repositories.checkpoint import CheckpointRepository

from .runner import StagePipeline


def make_stage_pipeline(settings: Optional[Settings] = None, out_dir: Optional[Union[str, Path]] = None) -> StagePipeline:
    """
    Factory function to create a StagePipeline based on configuration settings.
    Stage configurations are resolved (and validated) here, before any training starts.
    Returns:
        An instance of StagePipeline writing under ``out_dir`` (default: settings.output_dir).
    """
    settings = settings or get_settings()
    return StagePipeline(
        model_config=settings.model.to_model_config(),
        repository=CheckpointRepository(out_dir or settings.output_dir),
        baseline_config=settings.baseline.to_stage_config(),
        stage1_config=settings.stage1.to_stage_config(),
        stage2_config=settings.stage2.to_stage_config(),
        stage3_config=settings.stage3.to_stage_config(),
    )

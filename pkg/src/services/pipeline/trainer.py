import logging
from typing import List, Optional

import torch

from src.exceptions import EmptySplitError
from src.models import Model, forward
from src.optim import descent_monitor
from src.optim.state import Params
from src.schemas.training.stage import EpochRow, StageConfig
from src.services.data import Dataset
from src.sparsity import channel_sparsity

from .strategies import UpdateStrategy

logger = logging.getLogger(__name__)


def accuracy(
    model: Model, features: torch.Tensor, labels: torch.Tensor, params: Optional[Params] = None, chunk_size: int = 512
) -> float:
    """Top-1 accuracy in percent; ties resolve to the lowest class index."""
    total = labels.shape[0]
    if total == 0:
        raise EmptySplitError("cannot measure accuracy on an empty split")
    correct = 0
    for start in range(0, total, chunk_size):
        logits = forward(model, features[start : start + chunk_size], params)
        correct += int((logits.argmax(dim=1) == labels[start : start + chunk_size]).sum())
    return 100.0 * correct / total


class Trainer:
    """
    Runs the epoch loop of one stage.
    Shuffling uses a dedicated torch.Generator seeded from the stage config, so
    a stage is reproducible given its config and starting model.
    Attributes:
        strategy (UpdateStrategy): update rule and optimizer state.
        config (StageConfig): learning rate, schedule, batch size and seed.
        dataset (Dataset): training data with its fixed validation split.
    """

    def __init__(self, strategy: UpdateStrategy, config: StageConfig, dataset: Dataset, label: str = ""):
        self.strategy = strategy
        self.config = config
        self.dataset = dataset
        self.label = label or config.method.value
        self.generator = torch.Generator().manual_seed(config.seed)
        self.lagrangian_history: List[float] = []

    @property
    def rng_state(self) -> bytes:
        return bytes(self.generator.get_state().numpy().tobytes())

    def _sparsity(self) -> float:
        model = self.strategy.model
        if model.mask is not None:
            return channel_sparsity(model.mask)
        return channel_sparsity(
            self.strategy.sparsity_tensor(), model.channel_partition, self.strategy.sparsity_tolerance
        )

    def _train_epoch(self, features: torch.Tensor, labels: torch.Tensor, eta: float) -> float:
        total = labels.shape[0]
        order = torch.randperm(total, generator=self.generator)
        loss_sum = 0.0
        for start in range(0, total, self.config.batch_size):
            idx = order[start : start + self.config.batch_size]
            loss = self.strategy.step(features[idx], labels[idx], eta)
            logger.debug(f"[{self.label}] batch at {start}: loss={loss:.6f}")
            loss_sum += loss * idx.numel()
        return loss_sum / total

    def fit(self) -> List[EpochRow]:
        x_train, y_train = self.dataset.train()
        x_val, y_val = self.dataset.validation()
        if y_train.numel() == 0:
            raise EmptySplitError("training split is empty")
        if y_val.numel() == 0:
            raise EmptySplitError("validation split is empty")

        rows: List[EpochRow] = []
        for epoch in range(self.config.epochs):
            eta = self.config.learning_rate(epoch)
            train_loss = self._train_epoch(x_train, y_train, eta)
            val_accuracy = accuracy(self.strategy.model, x_val, y_val, self.strategy.effective_params())
            diagnostics = self.strategy.diagnostics(x_train, y_train)
            if diagnostics.get("lagrangian") is not None:
                self.lagrangian_history.append(diagnostics["lagrangian"])
            row = EpochRow(
                epoch=epoch + 1,
                lr=eta,
                train_loss=train_loss,
                val_accuracy=val_accuracy,
                channel_sparsity=self._sparsity(),
                **diagnostics,
            )
            rows.append(row)
            logger.info(
                f"[{self.label}] epoch {row.epoch}/{self.config.epochs} lr={eta:g} "
                f"loss={train_loss:.4f} acc={val_accuracy:.2f}% sparsity={row.channel_sparsity:.1f}%"
            )

        if self.lagrangian_history:
            descent_monitor(self.lagrangian_history)
        return rows

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Method(str, Enum):
    """Training update rules."""

    GL = "gl"
    RGSM = "rgsm"
    GSBC = "gsbc"
    BC = "bc"
    BLENDED_BC = "blended_bc"
    SGD = "sgd"


class Penalty(str, Enum):
    """Group penalty whose prox drives the u-update of the splitting methods."""

    GL = "gl"
    GL0 = "gl0"


class StageTag(str, Enum):
    BASELINE = "baseline"
    ONE = "I"
    TWO = "II"
    THREE = "III"


METHOD_LABELS = {
    Method.GL: "GL Ch-pruning",
    Method.RGSM: "RGSM Ch-pruning",
    Method.GSBC: "GSBC Ch-pruning",
    Method.BC: "BC binarized",
    Method.BLENDED_BC: "Blended BC binarized",
    Method.SGD: "Float SGD",
}

PRUNING_METHODS = (Method.GL, Method.RGSM, Method.GSBC)
BINARY_METHODS = (Method.BC, Method.BLENDED_BC)


class StageConfig(BaseModel):
    """Hyperparameters of one training stage."""

    model_config = ConfigDict(frozen=True)

    method: Method = Field(..., description="Update rule.")
    lam: float = Field(0.0, ge=0.0, description="Prox threshold lambda.")
    beta: float = Field(0.0, ge=0.0, description="Splitting coupling beta.")
    mu: float = Field(0.0, ge=0.0, description="Additive group-Lasso weight mu.")
    rho: float = Field(0.0, ge=0.0, le=1.0, description="BinaryConnect blending rho.")
    eta: float = Field(0.02, gt=0.0, description="Initial learning rate.")
    epochs: int = Field(..., ge=1, description="Number of epochs.")
    batch_size: int = Field(32, ge=1, description="Minibatch size.")
    lr_drop_epoch: Optional[int] = Field(None, ge=0, description="Epoch at which eta drops by 10x.")
    seed: int = Field(0, description="Shuffling seed.")
    penalty: Penalty = Field(Penalty.GL, description="Prox used by rgsm/gsbc.")
    weight_decay: float = Field(0.0, ge=0.0, description="Coefficient of the c*w term merged into the loss gradient.")

    @model_validator(mode="after")
    def check_method_parameters(self) -> "StageConfig":
        """gl: mu>0, lam=beta=0; rgsm: lam>0, beta>0, mu=0; gsbc: lam>0, beta=mu=0."""
        method = self.method
        if method == Method.GL:
            if not (self.mu > 0 and self.lam == 0 and self.beta == 0):
                raise ValueError("gl requires mu > 0 and lam = beta = 0")
        elif method == Method.RGSM:
            if not (self.lam > 0 and self.beta > 0 and self.mu == 0):
                raise ValueError("rgsm requires lam > 0, beta > 0 and mu = 0")
        elif method == Method.GSBC:
            if not (self.lam > 0 and self.beta == 0 and self.mu == 0):
                raise ValueError("gsbc requires lam > 0 and beta = mu = 0")
        elif self.lam != 0 or self.beta != 0 or self.mu != 0:
            raise ValueError(f"{method.value} takes no lam, beta or mu")
        if method == Method.BC and self.rho != 0:
            raise ValueError("bc takes no rho; use blended_bc")
        return self

    def learning_rate(self, epoch: int) -> float:
        return lr_schedule(self.eta, epoch, self.lr_drop_epoch)


def lr_schedule(eta: float, epoch: int, lr_drop_epoch: Optional[int]) -> float:
    """eta before ``lr_drop_epoch`` (0-based), eta / 10 from it on."""
    if lr_drop_epoch is not None and epoch >= lr_drop_epoch:
        return eta / 10.0
    return eta


class EpochRow(BaseModel):
    """One row of the per-epoch training curve."""

    epoch: int = Field(..., ge=1)
    lr: float
    train_loss: float
    val_accuracy: float = Field(..., description="Validation accuracy in percent.")
    channel_sparsity: float = Field(..., description="Channel sparsity in percent.")
    lagrangian: Optional[float] = Field(None, description="Full-batch objective value.")
    r_prox: Optional[float] = Field(None, description="Equilibrium residual of the u-update.")
    r_grad: Optional[float] = Field(None, description="Equilibrium residual of the w-update.")


class SummaryRow(BaseModel):
    """Final row of a stage, in the results-table column set."""

    model_config = ConfigDict(populate_by_name=True)

    label: str = Field(..., alias="Model")
    beta: float = Field(..., alias="β")
    lam: float = Field(..., alias="λ")
    mu: float = Field(..., alias="μ")
    accuracy: float = Field(..., alias="Accuracy")
    channel_sparsity: float = Field(..., alias="Ch. Sparsity")


class StageReport(BaseModel):
    """Per-epoch curves and final summary of one stage."""

    stage: StageTag
    method: Method
    rows: List[EpochRow] = Field(default_factory=list)
    summary: SummaryRow
    channel_bars: List[int] = Field(default_factory=list, description="Remaining channels, 1 per kept channel.")

    @property
    def final_accuracy(self) -> float:
        return self.summary.accuracy

    @property
    def final_sparsity(self) -> float:
        return self.summary.channel_sparsity

from typing import Dict, Tuple

from pydantic import BaseModel, ConfigDict, Field


class ConvSpec(BaseModel):
    """A valid (no padding) convolution layer, kernel layout (m, r, C_in, n)."""

    model_config = ConfigDict(frozen=True)

    m: int = Field(..., gt=0, description="Kernel extent along time.")
    r: int = Field(..., gt=0, description="Kernel extent along frequency.")
    channels: int = Field(..., gt=0, description="Input channels C_in.")
    filters: int = Field(..., gt=0, description="Output feature maps n.")
    s: int = Field(1, gt=0, description="Stride along time.")
    u: int = Field(1, gt=0, description="Stride along frequency.")

    @property
    def kernel_shape(self) -> Tuple[int, int, int, int]:
        return (self.m, self.r, self.channels, self.filters)

    def output_hw(self, height: int, width: int) -> Tuple[int, int]:
        """Output spatial size, floor((t - m + 1)/s) x floor((f - r + 1)/u)."""
        return (height - self.m + 1) // self.s, (width - self.r + 1) // self.u


class PoolSpec(BaseModel):
    """Non-overlapping p x q max-pooling."""

    model_config = ConfigDict(frozen=True)

    p: int = Field(..., gt=0, description="Window extent along time.")
    q: int = Field(..., gt=0, description="Window extent along frequency.")

    def output_hw(self, height: int, width: int) -> Tuple[int, int]:
        return height // self.p, width // self.q


class ModelConfig(BaseModel):
    """Shape configuration of the two-conv-layer keyword CNN."""

    model_config = ConfigDict(frozen=True)

    t: int = Field(..., gt=0, description="Input time frames.")
    f: int = Field(..., gt=0, description="Input frequency bins.")
    conv1: ConvSpec = Field(..., description="First conv layer (single input channel).")
    pool: PoolSpec = Field(..., description="Max-pooling after the first conv layer.")
    conv2: ConvSpec = Field(..., description="Second conv layer; its channels are pruned.")
    num_classes: int = Field(..., ge=2, description="Number of output classes K.")
    seed: int = Field(0, description="Initialization seed.")

    @classmethod
    def toy(cls, seed: int = 0) -> "ModelConfig":
        """Desk-scale variant that trains on one CPU core in minutes."""
        return cls(
            t=32,
            f=16,
            conv1=ConvSpec(m=4, r=4, channels=1, filters=16),
            pool=PoolSpec(p=2, q=2),
            conv2=ConvSpec(m=3, r=3, channels=16, filters=24),
            num_classes=4,
            seed=seed,
        )

    @classmethod
    def speech_commands(cls, seed: int = 0) -> "ModelConfig":
        """Speech-commands shaped network: 8x20_c1_f64_s1, 64 second-layer channels."""
        return cls(
            t=98,
            f=40,
            conv1=ConvSpec(m=8, r=20, channels=1, filters=64),
            pool=PoolSpec(p=2, q=2),
            conv2=ConvSpec(m=4, r=10, channels=64, filters=64),
            num_classes=12,
            seed=seed,
        )

    @property
    def conv1_hw(self) -> Tuple[int, int]:
        return self.conv1.output_hw(self.t, self.f)

    @property
    def pool_hw(self) -> Tuple[int, int]:
        return self.pool.output_hw(*self.conv1_hw)

    @property
    def conv2_hw(self) -> Tuple[int, int]:
        return self.conv2.output_hw(*self.pool_hw)

    @property
    def dense_in_features(self) -> int:
        height, width = self.conv2_hw
        return height * width * self.conv2.filters

    def parameter_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Shapes of all parameter tensors, in checkpoint order."""
        return {
            "conv1.weight": self.conv1.kernel_shape,
            "conv1.bias": (self.conv1.filters,),
            "conv2.weight": self.conv2.kernel_shape,
            "conv2.bias": (self.conv2.filters,),
            "dense.weight": (self.dense_in_features, self.num_classes),
            "dense.bias": (self.num_classes,),
        }

"""Binary checkpoint format handed from one training stage to the next.

Layout (all integers little-endian u32):
    magic ``SPTRIMCK1\\n``, version,
    JSON block length + UTF-8 JSON {model, stage, stage_config, pruning_config},
    tensor count, then per tensor: name length, name, rank, dims, '<f8' data,
    mask length + u8 bits (length 0: no mask),
    RNG state length + raw bytes.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import torch
from pydantic import ValidationError

from src.exceptions import (
    CheckpointException,
    CheckpointFormatError,
    CheckpointTensorCountError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from src.schemas.model.config import ModelConfig
from src.schemas.sparsity.groups import ChannelMask
from src.schemas.training.stage import StageConfig, StageTag

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SPTRIMCK1\n"
FORMAT_VERSION = 1
CHECKPOINT_FILENAME = "checkpoint.ckpt"

STAGE_DIRS: Dict[StageTag, str] = {
    StageTag.BASELINE: "baseline",
    StageTag.ONE: "stage1",
    StageTag.TWO: "stage2",
    StageTag.THREE: "stage3",
}


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """Model weights plus everything the next stage needs to continue."""

    config: ModelConfig
    tensors: Dict[str, torch.Tensor]
    stage: StageTag
    mask: Optional[ChannelMask] = None
    stage_config: Optional[StageConfig] = None
    # Stage I configuration, carried forward so later stages can name their pruned model.
    pruning_config: Optional[StageConfig] = None
    rng_state: bytes = b""
    version: int = FORMAT_VERSION

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (
            self.version == other.version
            and self.config == other.config
            and self.stage == other.stage
            and self.mask == other.mask
            and self.stage_config == other.stage_config
            and self.pruning_config == other.pruning_config
            and self.rng_state == other.rng_state
            and list(self.tensors) == list(other.tensors)
            and all(
                a.dtype == b.dtype and a.shape == b.shape and a.numpy().tobytes() == b.numpy().tobytes()
                for a, b in zip(self.tensors.values(), other.tensors.values())
            )
        )

    __hash__ = None  # type: ignore[assignment]


def _u32(value: int) -> bytes:
    return np.array([value], dtype="<u4").tobytes()


def _header(checkpoint: Checkpoint) -> bytes:
    block = {
        "model": checkpoint.config.model_dump(mode="json"),
        "stage": checkpoint.stage.value,
        "stage_config": checkpoint.stage_config.model_dump(mode="json") if checkpoint.stage_config else None,
        "pruning_config": checkpoint.pruning_config.model_dump(mode="json") if checkpoint.pruning_config else None,
    }
    return json.dumps(block, sort_keys=True).encode("utf-8")


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    parts: List[bytes] = [CHECKPOINT_MAGIC, _u32(checkpoint.version)]
    header = _header(checkpoint)
    parts += [_u32(len(header)), header, _u32(len(checkpoint.tensors))]
    for name, tensor in checkpoint.tensors.items():
        encoded = name.encode("utf-8")
        parts += [_u32(len(encoded)), encoded, _u32(tensor.dim())]
        parts += [_u32(d) for d in tensor.shape]
        parts.append(tensor.detach().cpu().numpy().astype("<f8").tobytes())
    bits = checkpoint.mask.bits if checkpoint.mask is not None else ()
    parts += [_u32(len(bits)), np.array(bits, dtype="u1").tobytes()]
    parts += [_u32(len(checkpoint.rng_state)), checkpoint.rng_state]
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CheckpointTruncatedError(f"checkpoint ends inside {what} at byte {len(self.data)}")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return int(np.frombuffer(self.take(4, what), dtype="<u4")[0])


def _parse_header(raw: bytes) -> Tuple[ModelConfig, StageTag, Optional[StageConfig], Optional[StageConfig]]:
    try:
        block = json.loads(raw.decode("utf-8"))
        config = ModelConfig.model_validate(block["model"])
        stage = StageTag(block["stage"])
        stage_config = StageConfig.model_validate(block["stage_config"]) if block.get("stage_config") else None
        pruning = StageConfig.model_validate(block["pruning_config"]) if block.get("pruning_config") else None
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError, ValidationError) as e:
        raise CheckpointFormatError(f"invalid checkpoint config block: {e}") from e
    return config, stage, stage_config, pruning


def decode_checkpoint(data: bytes) -> Checkpoint:
    """Inverse of encode_checkpoint.

    Raises:
        CheckpointFormatError: bad magic, unreadable config, unexpected tensor names or shapes, trailing bytes.
        CheckpointVersionError: a format version other than FORMAT_VERSION.
        CheckpointTruncatedError: data ends early.
        CheckpointTensorCountError: tensor count differs from the model's parameter count.
    """
    reader = _Reader(data)
    if reader.take(len(CHECKPOINT_MAGIC), "magic") != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("checkpoint has a bad magic")
    version = reader.u32("version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    config, stage, stage_config, pruning = _parse_header(reader.take(reader.u32("config length"), "config block"))

    expected = config.parameter_shapes()
    count = reader.u32("tensor count")
    if count != len(expected):
        raise CheckpointTensorCountError(f"checkpoint holds {count} tensors, model has {len(expected)}")

    tensors: Dict[str, torch.Tensor] = {}
    for _ in range(count):
        name = reader.take(reader.u32("name length"), "tensor name").decode("utf-8", errors="replace")
        rank = reader.u32("rank")
        dims = tuple(reader.u32("dims") for _ in range(rank))
        if expected.get(name) != dims or name in tensors:
            raise CheckpointFormatError(f"unexpected tensor '{name}' of shape {dims}")
        size = int(np.prod(dims, dtype=np.int64)) * 8
        values = np.frombuffer(reader.take(size, f"tensor '{name}'"), dtype="<f8").reshape(dims)
        tensors[name] = torch.from_numpy(values.astype(np.float64))

    length = reader.u32("mask length")
    bits = np.frombuffer(reader.take(length, "mask"), dtype="u1")
    try:
        mask = ChannelMask(bits=tuple(int(b) for b in bits)) if length else None
    except ValidationError as e:
        raise CheckpointFormatError(f"invalid mask: {e}") from e
    rng_state = reader.take(reader.u32("rng length"), "rng state")
    if reader.offset != len(data):
        raise CheckpointFormatError(f"{len(data) - reader.offset} trailing bytes in checkpoint")

    return Checkpoint(
        config=config,
        tensors=tensors,
        stage=stage,
        mask=mask,
        stage_config=stage_config,
        pruning_config=pruning,
        rng_state=rng_state,
        version=version,
    )


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(checkpoint))
    except OSError as e:
        logger.error(f"Could not write checkpoint {path}: {e}")
        raise CheckpointException(f"Could not write checkpoint {path}: {e}") from e
    logger.info(f"Saved stage {checkpoint.stage.value} checkpoint to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        logger.error(f"Could not read checkpoint {path}: {e}")
        raise CheckpointException(f"Could not read checkpoint {path}: {e}") from e
    checkpoint = decode_checkpoint(data)
    logger.info(f"Loaded stage {checkpoint.stage.value} checkpoint from {path}")
    return checkpoint


class CheckpointRepository:
    """
    Stores one checkpoint per stage under a run directory.
    Attributes:
        root (Path): run directory; stage checkpoints live in ``root/<stage dir>/checkpoint.ckpt``.
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def stage_dir(self, stage: StageTag) -> Path:
        return self.root / STAGE_DIRS[stage]

    def path_for(self, stage: StageTag) -> Path:
        return self.stage_dir(stage) / CHECKPOINT_FILENAME

    def exists(self, stage: StageTag) -> bool:
        return self.path_for(stage).is_file()

    def save(self, checkpoint: Checkpoint) -> Path:
        return save_checkpoint(self.path_for(checkpoint.stage), checkpoint)

    def load(self, stage: StageTag) -> Checkpoint:
        checkpoint = load_checkpoint(self.path_for(stage))
        if checkpoint.stage != stage:
            raise CheckpointFormatError(
                f"{self.path_for(stage)} holds a stage {checkpoint.stage.value} checkpoint, expected {stage.value}"
            )
        return checkpoint

from .checkpoint import (
    CHECKPOINT_MAGIC,
    FORMAT_VERSION,
    STAGE_DIRS,
    Checkpoint,
    CheckpointRepository,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "CHECKPOINT_MAGIC",
    "FORMAT_VERSION",
    "STAGE_DIRS",
    "Checkpoint",
    "CheckpointRepository",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_checkpoint",
    "save_checkpoint",
]

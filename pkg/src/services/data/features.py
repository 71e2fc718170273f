"""Precomputed feature file codec.

Layout: magic ``SPTRIM1\\n``; little-endian u32 K, count, t, f; then per
example a u32 label followed by t * f little-endian float32 values, row-major.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import torch

from src.exceptions import FeatureFileException, FeatureFormatError, FeatureLabelError, FeatureTruncatedError

from .dataset import Dataset

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"SPTRIM1\n"
_HEADER = np.dtype([("num_classes", "<u4"), ("count", "<u4"), ("t", "<u4"), ("f", "<u4")])


def _record_dtype(t: int, f: int) -> np.dtype:
    return np.dtype([("label", "<u4"), ("features", "<f4", (t, f))])


def encode_features(dataset: Dataset) -> bytes:
    header = np.array([(dataset.num_classes, len(dataset), dataset.t, dataset.f)], dtype=_HEADER)
    records = np.empty(len(dataset), dtype=_record_dtype(dataset.t, dataset.f))
    records["label"] = dataset.labels.numpy().astype("<u4")
    records["features"] = dataset.features.numpy().astype("<f4")
    return FEATURE_MAGIC + header.tobytes() + records.tobytes()


def decode_features(data: bytes) -> Dataset:
    """Inverse of encode_features.

    Raises:
        FeatureTruncatedError: if the data ends before the declared content.
        FeatureFormatError: on a bad magic or trailing bytes.
        FeatureLabelError: if a label is not below K.
    """
    if len(data) < len(FEATURE_MAGIC):
        raise FeatureTruncatedError(f"feature file holds only {len(data)} bytes")
    if data[: len(FEATURE_MAGIC)] != FEATURE_MAGIC:
        raise FeatureFormatError("feature file has a bad magic")
    offset = len(FEATURE_MAGIC)
    if len(data) < offset + _HEADER.itemsize:
        raise FeatureTruncatedError("feature file header is truncated")
    header = np.frombuffer(data, dtype=_HEADER, count=1, offset=offset)[0]
    offset += _HEADER.itemsize
    num_classes, count, t, f = (int(header[name]) for name in ("num_classes", "count", "t", "f"))

    record = _record_dtype(t, f)
    expected = offset + count * record.itemsize
    if len(data) < expected:
        raise FeatureTruncatedError(f"expected {expected} bytes for {count} examples, found {len(data)}")
    if len(data) > expected:
        raise FeatureFormatError(f"{len(data) - expected} trailing bytes after {count} examples")

    records = np.frombuffer(data, dtype=record, count=count, offset=offset)
    labels = records["label"].astype(np.int64)
    if count and int(labels.max()) >= num_classes:
        raise FeatureLabelError(f"label {int(labels.max())} out of range for {num_classes} classes")
    features = torch.from_numpy(records["features"].astype(np.float64))
    return Dataset(features=features, labels=torch.from_numpy(labels), num_classes=num_classes)


def save_features(dataset: Dataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_features(dataset))
    except OSError as e:
        logger.error(f"Could not write feature file {path}: {e}")
        raise FeatureFileException(f"Could not write feature file {path}: {e}") from e
    logger.info(f"Saved {len(dataset)} examples to {path}")
    return path


def load_features(path: Union[str, Path]) -> Dataset:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        logger.error(f"Could not read feature file {path}: {e}")
        raise FeatureFileException(f"Could not read feature file {path}: {e}") from e
    dataset = decode_features(data)
    logger.info(f"Loaded {len(dataset)} examples ({dataset.num_classes} classes) from {path}")
    return dataset

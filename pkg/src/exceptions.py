class NNCoreException(Exception):
    """Base exception for tensor-engine errors."""


class DimensionError(NNCoreException, ValueError):
    """Exception raised when tensor shapes are inconsistent for an operation."""


class LabelIndexError(NNCoreException, IndexError):
    """Exception raised when a class label is outside 0..K-1."""


class GradientCheckError(NNCoreException, ValueError):
    """Exception raised when a finite-difference check is misconfigured."""


class GroupingException(Exception):
    """Base exception for group-partition errors."""


class PartitionMismatchError(GroupingException, ValueError):
    """Exception raised when a partition does not target the given tensor."""


class ProxException(Exception):
    """Base exception for proximal and projection operators."""


class DegenerateMaskError(ProxException, ValueError):
    """Exception raised when a mask leaves no coordinate to project."""


class NegativeThresholdError(ProxException, ValueError):
    """Exception raised when a prox threshold or penalty weight is negative."""


class ModelException(Exception):
    """Base exception for model construction and masking errors."""


class ModelConfigError(ModelException, ValueError):
    """Exception raised when model dimensions do not chain."""


class MaskError(ModelException, ValueError):
    """Exception raised when a channel mask cannot be applied."""


class DatasetException(Exception):
    """Base exception for dataset errors."""


class DataConfigError(DatasetException, ValueError):
    """Exception raised when synthetic data parameters are invalid."""


class EmptySplitError(DatasetException):
    """Exception raised when a dataset split has no examples."""


class FeatureFileException(DatasetException):
    """Base exception for feature file errors."""


class FeatureFormatError(FeatureFileException):
    """Exception raised when a feature file has a bad magic or layout."""


class FeatureTruncatedError(FeatureFileException):
    """Exception raised when a feature file ends early."""


class FeatureLabelError(FeatureFileException):
    """Exception raised when a stored label is out of range."""


class CheckpointException(Exception):
    """Base exception for checkpoint persistence errors."""


class CheckpointFormatError(CheckpointException):
    """Exception raised when a checkpoint has a bad magic or layout."""


class CheckpointVersionError(CheckpointException):
    """Exception raised when a checkpoint was written by an incompatible version."""


class CheckpointTruncatedError(CheckpointException):
    """Exception raised when a checkpoint ends early."""


class CheckpointTensorCountError(CheckpointException):
    """Exception raised when a checkpoint holds the wrong set of tensors."""


class PipelineException(Exception):
    """Base exception for training pipeline errors."""


class StageConfigError(PipelineException, ValueError):
    """Exception raised when a stage configuration does not fit the stage."""


class MissingMaskError(PipelineException):
    """Exception raised when a stage needs a frozen channel mask and none exists."""


class ReportWriteError(PipelineException):
    """Exception raised when report files cannot be written."""


# General application exceptions
class ConfigurationError(Exception):
    """Exception raised when configuration is invalid."""

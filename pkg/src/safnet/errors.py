"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor dimensions do not satisfy an operation's contract."""


class ConfigError(ValueError):
    """Invalid configuration or flag combination."""


class DataError(ValueError):
    """Dataset file is missing, malformed, or truncated."""


class IntegrityError(DataError):
    """Stored artifact fails its checksum or version gate."""


class MetadataMismatchError(DataError):
    """Checkpoint metadata does not match the receiving model."""


class LossDomainError(ValueError):
    """Loss evaluated outside its domain in strict mode."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, message, layer_name=None):
        super().__init__(message)
        self.layer_name = layer_name


class CalibrationError(RuntimeError):
    """Capacity calibration sweep exhausted without meeting the target ratio."""

    def __init__(self, message, best_ratio=None, required_ratio=None):
        super().__init__(message)
        self.best_ratio = best_ratio
        self.required_ratio = required_ratio

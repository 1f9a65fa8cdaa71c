class ForGANError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ForGANError, ValueError):
    """An operation received operands whose shapes violate its contract."""


class MissingGradientError(ForGANError, RuntimeError):
    pass


class DataError(ForGANError, ValueError):
    """Invalid, unreadable or inconsistent input data."""


class ConfigError(ForGANError, ValueError):
    pass


class TrainingDivergedError(ForGANError, FloatingPointError):
    """A loss became non-finite during training."""


class ModelFormatError(ForGANError, ValueError):
    """A model file is corrupt, truncated or from an incompatible format version."""

"""Exception types shared across the package."""


class TabFedError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TabFedError, ValueError):
    """Invalid shapes, bounds or settings."""


class DataLoadError(TabFedError, ValueError):
    """A CSV or schema file could not be ingested."""


class PartitionError(TabFedError, ValueError):
    pass


class NonFiniteError(TabFedError, FloatingPointError):
    """A loss, gradient or sample became NaN or infinite."""


class TrainingError(TabFedError, RuntimeError):
    pass


class CheckpointError(TabFedError, ValueError):
    pass

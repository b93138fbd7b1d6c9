"""Exception types shared across the package."""


class DomainError(ValueError):
    """A physical or signal parameter lies outside its admissible range."""


class DegenerateInputError(ValueError):
    """Input carries no information to normalise (e.g. zero variance)."""


class ShapeError(ValueError):
    """Tensor shapes or channel counts do not line up."""


class TapeError(RuntimeError):
    """A backward pass was requested without the saved forward state."""


class NumericError(ArithmeticError):
    """Non-finite values showed up in statistics, gradients or losses."""


class TrainingError(NumericError):
    """Training diverged; ``epoch`` names the epoch where it happened."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class MetricError(ValueError):
    """A metric is undefined for the given inputs."""


class ConfigError(ValueError):
    """Invalid experiment or detector configuration."""

"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor shapes incompatible with the requested operation."""


class NonFiniteError(ValueError):
    """A NaN or Inf reached an op boundary."""


class GraphSpentError(RuntimeError):
    """backward() was called twice on the same trace."""


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class ConfigError(ValueError):
    """Invalid or unknown configuration content. CLI exit code 2."""


class CheckpointError(ValueError):
    """Corrupt or incompatible checkpoint file."""

"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scheme, dataset, or experiment configuration."""


class DataGenerationError(RuntimeError):
    """Synthetic dataset could not be generated (e.g. rank deficiency)."""


class DecodeError(RuntimeError):
    """A group gradient could not be recovered from an upload subset."""


class DivergenceError(RuntimeError):
    """The optimality gap exploded during a simulation run."""

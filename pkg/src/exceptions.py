"""
Exception types raised by the simulator, the policies and the MetaNet pipeline.
"""


class DimensionError(ValueError):
    """Tensor shapes do not fit the operation."""


class ConfigError(ValueError):
    """Invalid experiment, model or policy configuration."""


class ScheduleValidationError(ValueError):
    """A scheduling decision does not match the active tasks or hosts."""


class NonFiniteError(FloatingPointError):
    """NaN or Inf showed up where finite numbers are required."""


class EmptyEpisodeError(ValueError):
    """Metrics were requested for an episode without intervals."""


class PolicyError(RuntimeError):
    """A scheduling policy failed to produce a decision."""

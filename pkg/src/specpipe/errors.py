"""Exception hierarchy shared across the toolkit."""


class SpecPipeError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SpecPipeError, ValueError):
    """An input value violates a type invariant."""


class NonPositiveBandwidth(ValidationError):
    pass


class NegativeLatency(ValidationError):
    pass


class ZeroGpuMemory(ValidationError):
    pass


class UnknownPreset(SpecPipeError, KeyError):
    pass


class ConfigError(SpecPipeError, ValueError):
    """A config document is malformed; the message names the offending key."""


class InsufficientTotalMemory(SpecPipeError):
    """The models do not fit in GPU + CPU + disk combined."""


class NoFeasiblePolicy(SpecPipeError):
    """Every candidate policy violates the GPU memory constraint."""


class Underdetermined(SpecPipeError):
    """Fewer observations than free parameters."""


class NonConvergent(SpecPipeError):
    """Calibration residual stayed above the acceptance threshold."""


class InfeasiblePlan(SpecPipeError):
    """Simulated peak GPU memory exceeded capacity; indicates an accounting bug."""

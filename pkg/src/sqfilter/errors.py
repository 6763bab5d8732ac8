"""Exception hierarchy shared by all sqfilter modules."""


class SqFilterError(Exception):
    """Base class for every error raised by sqfilter."""


class StructuralError(SqFilterError, ValueError):
    """Shapes or dimensions of inputs are inconsistent."""


class PhysicalityError(SqFilterError, ValueError):
    """Input violates a physical constraint (uncertainty relation, unitarity, ...)."""


class NonCommutingObservationError(SqFilterError, ValueError):
    """The requested observation set is not jointly measurable (Z is not symmetric)."""


class UnsupportedScenarioError(SqFilterError, ValueError):
    """The closed-form filter does not cover the requested parameters."""


class IntegrationError(SqFilterError, RuntimeError):
    """Numerical integration blew up or breached a monitored invariant."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class StepSizeError(IntegrationError):
    """Trace renormalisation in a single step exceeded its bound."""


class TruncationError(IntegrationError):
    """Population of the highest Fock level exceeded the leakage tolerance."""


class ConsistencyError(SqFilterError, RuntimeError):
    """Internal cross-check failed (e.g. Heisenberg/Schrodinger adjointness)."""


class ConfigError(SqFilterError, ValueError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field

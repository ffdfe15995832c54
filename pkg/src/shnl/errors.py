"""Exception hierarchy shared across the package."""


class SHNLError(Exception):
    """Base class for all errors raised by :mod:`shnl`."""


class DomainError(SHNLError, ValueError):
    """Invalid grid/domain parameters or a field bound to the wrong domain."""


class KernelError(SHNLError, ValueError):
    """Kernel construction failure."""


class UnderResolved(KernelError):
    """The eps-scaled kernel support is narrower than two grid cells."""


class NegativeSample(KernelError):
    """A kernel used in the K role produced a negative sample."""


class KernelFileError(KernelError):
    """A tabulated kernel file is missing or malformed."""


class ModelError(SHNLError, ValueError):
    """Inconsistent model parameters."""


class StepperError(SHNLError, RuntimeError):
    """Base for time integration failures."""


class NonFinite(StepperError):
    """The solution left the finite range (blow-up)."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class Stalled(StepperError):
    """Energy guard halved the time step too many times."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class ConfigError(SHNLError, ValueError):
    """Run configuration could not be parsed or validated."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ScheduleMismatch(SHNLError, ValueError):
    """Two trajectories were recorded on different snapshot schedules."""

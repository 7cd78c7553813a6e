"""Exception types raised by fluxopt."""


class FluxoptError(Exception):
    """Base class for all library errors."""


class ConfigError(FluxoptError, ValueError):
    """Invalid parameters, scenario files or CLI arguments."""


class NonFiniteError(FluxoptError, ArithmeticError):
    """An integrated state became NaN/Inf or left its admissible region.

    ``last_state`` holds the last finite state before the failure, which the
    shooting solver uses to decide on which side of the target a shot landed.
    """

    def __init__(self, message, step=None, last_state=None, lambda0=None):
        super().__init__(message)
        self.step = step
        self.last_state = last_state
        self.lambda0 = lambda0


class NoSignChange(FluxoptError, ValueError):
    """Root bracket endpoints have the same sign."""


class NoRoot(FluxoptError):
    """No admissible root could be bracketed."""


class ShootingError(FluxoptError):
    """Shooting converged in the unknown but missed the terminal tolerance."""


class NotSettled(FluxoptError):
    """The transient never settled inside the simulated horizon."""


class DampingTooLow(FluxoptError, ValueError):
    """Speed loop damping factor is not strictly above one."""


class NegativeTorque(FluxoptError, ValueError):
    """A steady-state formula received a negative load torque."""

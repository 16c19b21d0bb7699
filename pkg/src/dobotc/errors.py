"""Exception hierarchy shared by all modules."""


class DobotcError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(DobotcError, ValueError):
    pass


class ParameterError(DobotcError, ValueError):
    pass


class NumericalError(DobotcError, ArithmeticError):
    pass


class SingularEquationError(NumericalError):
    """A Lyapunov/Sylvester equation has no unique solution."""


class StabilizabilityError(NumericalError):
    pass


class SynthesisError(DobotcError):
    """Controller synthesis failed.

    ``step`` is the number of the design-procedure step that failed
    (1 parameters, 2 baseline controller, 3 observer, 4 assumptions,
    5 compensation gain, 6 estimation-error stability), or None when the
    failure happened outside the procedure.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step

    def __str__(self):
        msg = super().__str__()
        if self.step is not None:
            return f"[step {self.step}] {msg}"
        return msg


class ObserverDesignError(SynthesisError):
    pass


class CompensationError(SynthesisError):
    pass


class IntegrationError(DobotcError, ArithmeticError):
    pass


class DivergenceError(IntegrationError):
    pass


class ConfigError(DobotcError, ValueError):
    pass


class DataError(DobotcError, ValueError):
    pass

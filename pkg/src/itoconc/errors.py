"""Exception hierarchy shared by every module of the package."""


class ItoConcError(Exception):
    """Base class for all errors raised by itoconc."""


class InvalidParameter(ItoConcError, ValueError):
    """A parameter violates the precondition of the operation it feeds."""


class DomainError(ItoConcError, ValueError):
    """The evaluation point lies outside the region where a bound holds."""


class FellerViolation(InvalidParameter):
    """CIR parameters with 2a <= sigma**2."""


class SolverFailure(ItoConcError, RuntimeError):
    """Root finding did not converge within the iteration cap."""


class InvalidKernel(ItoConcError, ValueError):
    """A kernel bound is negative or its squared integral is not finite."""


class SimulationFailure(ItoConcError, RuntimeError):
    """A simulated quantity turned out non-finite."""

    def __init__(self, message, path_index=None):
        super().__init__(message)
        self.path_index = path_index


class InvalidInput(ItoConcError, ValueError):
    """Malformed input to an estimation or certification step."""


class ConfigError(ItoConcError, ValueError):
    """A scenario configuration cannot be parsed or is inconsistent."""

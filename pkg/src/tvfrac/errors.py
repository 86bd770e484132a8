"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class AlignmentError(ValueError):
    """A box coordinate does not fall on a mesh line."""


class UndefinedRatio(ZeroDivisionError):
    pass


class DivergenceError(RuntimeError):
    """Raised when an iteration produces non-finite values or blows up.

    ``state`` carries whatever the raiser had at hand for post-mortem.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ConfigError(InvalidArgument):
    """Malformed config file, unknown key or bad value."""


class StepConditionError(InvalidArgument):
    """Step sizes violate the convergence condition and strict mode is on."""

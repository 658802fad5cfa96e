"""Exception hierarchy shared by every gpdrf module."""


class GPDRFError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GPDRFError, ValueError):
    pass


class ConfigurationError(GPDRFError, ValueError):
    pass


class InputError(GPDRFError, ValueError):
    pass


class ParseError(GPDRFError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NotPositiveDefiniteError(GPDRFError, ArithmeticError):
    def __init__(self, message="matrix is not positive definite; try a larger jitter"):
        super().__init__(message)


class NumericalError(GPDRFError, ArithmeticError):
    pass


class TrainingDivergenceError(GPDRFError, ArithmeticError):
    def __init__(self, message, parameter=None, step=None):
        super().__init__(message)
        self.parameter = parameter
        self.step = step


class InsufficientSamplesError(GPDRFError, ValueError):
    pass


class ModelStateError(GPDRFError, RuntimeError):
    pass


class CompatibilityError(GPDRFError, ValueError):
    pass


class CheckpointVersionError(GPDRFError, ValueError):
    pass

"""Exception hierarchy shared by every module."""


class ReparamError(Exception):
    """Base class for all errors raised by repgeo."""


class DomainError(ReparamError, ValueError):
    """A point lies outside the declared domain of a field or chart."""


class NumericsError(ReparamError, ArithmeticError):
    """Non-finite values, singular or badly conditioned linear algebra."""


class InvalidChart(ReparamError, ValueError):
    pass


class InvalidMetric(ReparamError, ValueError):
    pass


class InvalidHessian(ReparamError, ValueError):
    pass


class InvalidData(ReparamError, ValueError):
    pass


class InvalidModel(ReparamError, ValueError):
    pass


class InvalidComparison(ReparamError, ValueError):
    pass


class NotAtMAP(ReparamError, ValueError):
    """Gradient at the supplied MAP point is too large for a Laplace approximation."""


class NoConvergence(ReparamError, RuntimeError):
    pass


class DomainExit(ReparamError):
    """A trajectory left the domain of its loss or chart."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"trajectory left the domain at step {step}")


class ConfigError(ReparamError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)

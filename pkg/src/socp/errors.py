"""Exception hierarchy shared by every module."""


class SocpError(Exception):
    """Base class for all errors raised by the package."""


class DimensionError(SocpError, ValueError):
    """Array lengths do not match the declared block or problem sizes."""


class DomainError(SocpError, ValueError):
    """A function was evaluated outside its declared domain or returned non-finite values."""


class RegularityError(SocpError):
    """A matrix that must be invertible (mass matrix, control Hessian) is singular."""

    def __init__(self, message: str, condition: float | None = None):
        super().__init__(message)
        self.condition = condition


class LegendreInversionError(RegularityError):
    """Newton inversion of a fiber derivative did not converge."""


class SingularControlError(SocpError):
    """The maximization condition does not determine the control."""


class NotInvertibleError(SocpError):
    """The control cannot be recovered from the acceleration (underactuated or singular)."""


class UnsupportedFormulationError(SocpError):
    """The requested formulation needs data the problem does not carry."""


class ChartError(SocpError, ValueError):
    """A point was handed to a map expecting a different chart."""


class ConfigError(SocpError, ValueError):
    """Invalid run configuration (unknown key, malformed value, bad combination)."""

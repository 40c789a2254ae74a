"""Exception types raised across the package."""


class WsindyError(Exception):
    pass


class InvalidArgument(WsindyError, ValueError):
    pass


class FormatError(WsindyError, ValueError):
    """Malformed or inconsistent WSD1 dataset file."""


class SimulationError(WsindyError, RuntimeError):
    pass


class SingularBiasError(WsindyError, ArithmeticError):
    """A trigonometric multiplier vanished, so the bias map cannot be inverted."""


class BudgetError(WsindyError, RuntimeError):
    pass

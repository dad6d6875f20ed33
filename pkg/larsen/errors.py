"""Exceptions raised by larsen

Every exception subclasses the builtin a caller would naturally catch (``ValueError``,
``ArithmeticError``, ``RuntimeError``) and carries the exit code used by the command line.
"""


class LarsenError(Exception):
    """Base class of all larsen exceptions"""

    exit_code = 1


class ConfigurationError(LarsenError, ValueError):
    """Invalid configuration or parameter (e.g. non-COLA window, notch above Nyquist)"""

    exit_code = 1


class UsageError(LarsenError):
    """Command-line misuse, including refusing to overwrite an existing output"""

    exit_code = 1


class DataError(LarsenError, ValueError):
    """Input data cannot be used (empty corpus, missing file, wrong sample rate...)"""

    exit_code = 2


class GeometryError(DataError):
    """Positions outside a room or unsatisfiable placement constraints"""


class ScalingError(DataError):
    """A ratio (SPR, SNR) cannot be met, typically because of a zero-energy reference"""


class ShapeError(DataError):
    """Mismatching array shapes, lengths or sample rates"""


class DivergenceError(LarsenError, ArithmeticError):
    """Non-finite values appeared in a recursive computation

    Parameters
    ----------
    message : str
        error message
    frame : int, optional
        index of the frame where the divergence was detected
    """

    exit_code = 3

    def __init__(self, message, frame=None):
        super().__init__(message)
        self.frame = frame


class NumericError(DivergenceError):
    """Non-finite values in a per-bin computation, `bin` identifies the first bad bin"""

    def __init__(self, message, frame=None, bin=None):
        super().__init__(message, frame=frame)
        self.bin = bin


class ProtocolError(LarsenError, RuntimeError):
    """External suppressor (plugin) protocol failure"""

    exit_code = 4

    def __init__(self, message, frame=None):
        super().__init__(message)
        self.frame = frame


class HandshakeError(ProtocolError):
    pass


class PluginTimeoutError(ProtocolError):
    pass


class PluginStreamError(ProtocolError):
    pass

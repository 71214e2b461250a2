"""Exception hierarchy shared by all polyflow modules."""


class PolyflowError(Exception):
    """Base class for every error raised by polyflow."""


class FanError(PolyflowError, ValueError):
    pass


class ZeroNormal(FanError):
    pass


class DegenerateAngle(FanError):
    pass


class BadWinding(FanError):
    pass


class FanMismatch(PolyflowError, ValueError):
    pass


class DegenerateEdge(PolyflowError, ArithmeticError):
    pass


class ZeroAngleSum(PolyflowError, ArithmeticError):
    pass


class SingularFieldOnEdge(PolyflowError, ArithmeticError):
    pass


class FpNonConvergence(PolyflowError, RuntimeError):
    def __init__(self, message, iterations=None, gap=None):
        super().__init__(message)
        self.iterations = iterations
        self.gap = gap


class InadmissibleIterate(PolyflowError, RuntimeError):
    pass


class NoConservationDeclared(PolyflowError, ValueError):
    pass


class TimeGridMismatch(PolyflowError, ValueError):
    pass


class RunFailed(PolyflowError, RuntimeError):
    def __init__(self, message, tau=None, reason=None):
        super().__init__(message)
        self.tau = tau
        self.reason = reason


class BadParameter(PolyflowError, ValueError):
    pass


class Inadmissible(PolyflowError, ValueError):
    pass


class ParseError(PolyflowError, ValueError):
    """Malformed scenario text. ``lineno`` is 1-based, or None."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class ScenarioIOError(PolyflowError, OSError):
    pass

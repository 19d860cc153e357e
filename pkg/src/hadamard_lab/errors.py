"""Exception hierarchy shared by all modules."""


class HadamardLabError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameters(HadamardLabError, ValueError):
    pass


class PositiveCurvature(HadamardLabError, ValueError):
    pass


class CoverageGap(HadamardLabError, ValueError):
    pass


class InvalidModel(HadamardLabError, ValueError):
    pass


class StiffnessFailure(HadamardLabError, RuntimeError):
    """The Riccati integration could not proceed.

    ``r_reached`` is the largest radius at which the state was still valid.
    """

    def __init__(self, message, r_reached):
        super().__init__(f"{message} (largest radius reached: {r_reached:.6g})")
        self.r_reached = r_reached


class UnsupportedFamily(HadamardLabError, ValueError):
    pass


class WindowTooSmall(HadamardLabError, ValueError):
    pass


class OrderingUnverified(HadamardLabError, ValueError):
    pass


class InnerDivergent(HadamardLabError, ArithmeticError):
    def __init__(self, theta):
        super().__init__(f"ray integral of 1/J diverges at theta={theta:.6g}")
        self.theta = theta


class QuadratureFailure(HadamardLabError, ArithmeticError):
    pass


class NotTransient(HadamardLabError, ValueError):
    pass


class RadiusTooSmall(HadamardLabError, ValueError):
    pass


class NonFiniteState(HadamardLabError, FloatingPointError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ExcessiveBudgetLoss(HadamardLabError, RuntimeError):
    pass


class InsufficientSamples(HadamardLabError, ValueError):
    pass

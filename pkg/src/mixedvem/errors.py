"""Exception hierarchy shared by the solver modules."""


class VemError(Exception):
    """Base class for all errors raised by mixedvem."""


class InvalidArgumentError(VemError, ValueError):
    pass


class DegenerateElementError(VemError):
    pass


class DegenerateEdgeError(VemError):
    pass


class NonManifoldError(VemError):
    pass


class NotStarShapedError(VemError):
    pass


class RankDeficiencyError(VemError):
    """A basis construction met a numerically dependent column."""


class RankAnomalyError(VemError):
    """The gradient coefficient matrix does not have the expected nullspace size."""


class InvalidCoefficientError(VemError):
    pass


class InvalidStateError(VemError):
    pass


class ConditioningError(VemError):
    def __init__(self, message: str, cond: float):
        super().__init__(f"{message} (cond ~ {cond:.3e})")
        self.cond = cond


class SingularSystemWarning(UserWarning):
    """The assembled saddle-point system is singular by construction."""


class RankDeficiencyWarning(UserWarning):
    """A least-squares fit met a rank-deficient Vandermonde matrix."""

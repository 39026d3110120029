"""Exception hierarchy shared by all modules."""


class CondWalkError(Exception):
    """Base class; ``exit_code`` is used by the CLI."""

    exit_code = 1


class ValidationError(CondWalkError, ValueError):
    exit_code = 2


class RowSumError(ValidationError):
    pass


class NegativeEntry(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class DuplicateLabel(ValidationError):
    pass


class HypothesisFailure(CondWalkError):
    exit_code = 3


class NotPrimitive(HypothesisFailure):
    pass


class NotCentered(HypothesisFailure):
    pass


class Degenerate(HypothesisFailure):
    """sigma^2 vanishes; the walk is a coboundary plus a constant."""


class AmbiguousScan(HypothesisFailure):
    """r_t came numerically close to 1 but no lattice certificate verifies."""


class LatticeWalk(HypothesisFailure):
    """The walk is lattice, so local limit constants do not apply."""


class NumericalError(CondWalkError):
    exit_code = 4


class SingularSystem(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class NoConvergence(NonConvergence):
    pass


class BranchLoss(NumericalError):
    pass


class BudgetExceeded(NumericalError):
    pass


class BinUnderflow(NumericalError):
    pass


class ZeroHarmonic(NumericalError):
    pass


class NumericalWeightBlowup(NumericalError):
    pass


class TableMismatch(NumericalError):
    pass


class InsufficientN(CondWalkError):
    exit_code = 2

"""Exception hierarchy shared by all modules."""


class MemControlError(Exception):
    """Base class for library errors."""


class PoleError(MemControlError, ValueError):
    pass


class NotConverged(MemControlError, ArithmeticError):
    pass


class RouteDisagreement(MemControlError):
    pass


class BranchCutError(MemControlError, ValueError):
    pass


class SingularSymbol(MemControlError, ZeroDivisionError):
    pass


class ContourIntersectsBranchCut(MemControlError, ValueError):
    pass


class NonConvergedQuadrature(MemControlError, ArithmeticError):
    pass


class DimensionMismatch(MemControlError, ValueError):
    pass


class MomentIntegralFailure(MemControlError, ArithmeticError):
    pass


class StepSingular(MemControlError, ZeroDivisionError):
    pass


class GridIncompatible(MemControlError, ValueError):
    pass


class SubIterationDiverged(MemControlError, ArithmeticError):
    def __init__(self, k, t, residual):
        super().__init__(f"sub-iteration diverged at step {k} (t={t:.6g}), last residual {residual:.3e}")
        self.k = k
        self.t = t
        self.residual = residual


class QuadratureNotConverged(MemControlError, ArithmeticError):
    pass


class ZeroVector(MemControlError, ValueError):
    pass


class FixedPointDiverged(MemControlError, ArithmeticError):
    def __init__(self, iterations, residual):
        super().__init__(f"fixed point not reached after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class PicardNotConverged(MemControlError, ArithmeticError):
    def __init__(self, max_iter, update):
        super().__init__(f"Picard iteration not converged after {max_iter} iterations (last update {update:.3e})")
        self.max_iter = max_iter
        self.update = update


class NotApplicable(MemControlError):
    pass


class ConfigParseError(MemControlError, ValueError):
    pass


class ConfigValidationError(MemControlError, ValueError):
    pass

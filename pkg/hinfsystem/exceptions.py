class HinfSystemError(Exception):
    '''
    Base class for every error raised by the system.
    '''

class SingularAt(HinfSystemError):
    '''
    An Inverse, Feedback or denominator is singular at the evaluation point.
    '''
    def __init__(self, s: complex | None = None, message: str | None = None):
        self.s = s
        super().__init__(message or f'Expression is singular at s={s}')

class DimensionMismatch(HinfSystemError):
    '''
    Incompatible dimensions found while building an interconnection.
    '''

class RefinementBudgetExceeded(HinfSystemError):
    '''
    Adaptive refinement needed more nodes than the configured budget, which signals a zero
    of the sampled function on (or very near) the sampled path.
    '''

class OriginOnPolygon(HinfSystemError):
    '''
    A vertex or a segment of the polygon passes through the origin.
    '''

class DeclaredInfoInconsistent(HinfSystemError):
    '''
    A probe of the imaginary axis found a pole that was not declared.
    '''

class UnboundedOnAxis(HinfSystemError):
    '''
    The transfer function is not bounded on the sampled part of the imaginary axis.
    '''

class TailBoundMissing(HinfSystemError):
    '''
    No bound on the integral beyond the cutoff could be derived or was supplied.
    '''

class NoPositiveRoot(HinfSystemError):...

class AOnAxisZero(HinfSystemError):...

class ZeroOnContour(HinfSystemError):
    '''
    The quasi-polynomial vanishes on, or too close to, the counting contour.
    '''

class InitialPointUnstable(HinfSystemError):
    '''
    The stability gate does not certify the initial controller.
    '''

class StalledAtStabilityBoundary(HinfSystemError):
    '''
    Backtracking was exhausted without finding a stabilizing trial point.
    '''

class NotFiniteDimensional(HinfSystemError):...

class CflViolation(HinfSystemError):...

class NonRealizableController(HinfSystemError):
    '''
    The controller contains a block without a causal time-domain realization.
    '''

class DegenerateSingularGap(UserWarning):
    '''
    The two largest singular values at an active frequency are too close for the singular
    vectors to be trusted.
    '''

"""Exception hierarchy shared across the package."""


class SbmSirError(Exception):
    """Base class for all errors raised by this package."""


# --- model validation -------------------------------------------------------

class ModelValidationError(SbmSirError, ValueError):
    pass


class ZeroRowError(ModelValidationError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} of the affinity matrix is all zeros")


class AsymmetricWError(ModelValidationError):
    def __init__(self):
        super().__init__("affinity matrix is not symmetric")


class NTooSmallError(ModelValidationError):
    def __init__(self, n: int, wmax: float):
        self.n, self.wmax = n, wmax
        super().__init__(f"population n={n} must exceed max affinity {wmax}")


class NonPositiveRateError(ModelValidationError):
    def __init__(self, name: str, value: float):
        super().__init__(f"rate {name}={value} must be positive")


# --- sampling ---------------------------------------------------------------

class MaxAttemptsExceeded(SbmSirError, RuntimeError):
    """Rejection sampling did not produce a simple graph in time."""


# --- simulation -------------------------------------------------------------

class InfeasibleInit(SbmSirError, ValueError):
    """Initial condition incompatible with the community sizes."""


class IncompleteTrajectory(SbmSirError, RuntimeError):
    """The run was cut by the horizon before extinction."""


class EventCapExceeded(SbmSirError, RuntimeError):
    """Hard event cap hit; parameters are probably wrong."""


# --- ODE --------------------------------------------------------------------

class OutOfDomain(SbmSirError, ValueError):
    """State left the invariant domain beyond tolerance."""


class StepSizeUnderflow(SbmSirError, RuntimeError):
    """Adaptive integrator step collapsed; stiffness or bad parameters."""


class HorizonExceeded(SbmSirError, RuntimeError):
    """Steady state not reached before the time cap."""


class SingularS(SbmSirError, ValueError):
    """Pair-approximation field needs s_k bounded away from zero."""


# --- analytics --------------------------------------------------------------

class NoConvergence(SbmSirError, RuntimeError):
    """Power iteration failed to converge."""


class DegenerateInput(UserWarning):
    """x(0) = 0 with R0 > 1: two fixed points; the constant branch is returned."""


class QuadratureUnstable(SbmSirError, ValueError):
    """Gauss-Laguerre weights unusable for this eta/gamma ratio."""


# --- CLI / files ------------------------------------------------------------

class GridMismatch(SbmSirError, ValueError):
    """Two files being compared do not share a time grid."""

"""Exception types shared across the package."""


class DiffMpcError(Exception):
    """Base class for all package errors."""


class DimensionError(DiffMpcError, ValueError):
    """Array sizes inconsistent with the declared problem dimensions."""


class InteriorityError(DiffMpcError, ValueError):
    """A point violates strict interiority (some multiplier or slack <= 0)."""


class CapabilityError(DiffMpcError, RuntimeError):
    """A required derivative callback was not supplied.

    Model authors can auto-generate the missing callbacks with the
    forward-mode helpers in :mod:`diffmpc.ad`.
    """


class FactorizationError(DiffMpcError, RuntimeError):
    """A stage block could not be factorized even after regularization."""

    def __init__(self, stage, message=None):
        self.stage = stage
        super().__init__(message or f"stage {stage}: non-positive-definite block after regularization")


class SingularKktError(DiffMpcError, RuntimeError):
    """The KKT Jacobian is numerically singular.

    Usually signals violated LICQ/SOSC or a weakly active constraint at a
    barrier parameter that is too small for the active-set geometry.
    """

    def __init__(self, message, cond_estimate=None):
        self.cond_estimate = cond_estimate
        if cond_estimate is not None:
            message = f"{message} (condition estimate {cond_estimate:.3e})"
        super().__init__(message)


class SolveError(DiffMpcError, RuntimeError):
    """A solve did not converge; carries the diagnostic SolveInfo."""

    def __init__(self, message, info=None):
        self.info = info
        if info is not None:
            message = f"{message}: {info}"
        super().__init__(message)


class PreconditionError(DiffMpcError, ValueError):
    """An operation was called with inputs outside its contract."""

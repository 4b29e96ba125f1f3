"""Exception types shared across the package."""


class TransverseDynamicsError(Exception):
    """Base class for all package errors."""


class SingularMatrix(TransverseDynamicsError):
    """Input matrix is numerically singular and cannot be a group element."""


class NonSymmetricTheta(TransverseDynamicsError):
    """Operation requires a symmetric root subset (k in theta iff d-k in theta)."""


class DegenerateGap(TransverseDynamicsError):
    """A required singular-value gap is below gap_min; the flag is ill-conditioned."""


class NotTransverse(TransverseDynamicsError):
    """Flag pair is numerically non-transverse (conditioning below tolerance)."""


class EigenFailure(TransverseDynamicsError):
    """Eigenvalue solver did not converge."""


class PreconditionViolated(TransverseDynamicsError):
    """A stated precondition was checked and does not hold."""

    def __init__(self, message, offenders=None):
        super().__init__(message)
        self.offenders = offenders if offenders is not None else []


class PresetError(TransverseDynamicsError):
    """Group preset is malformed (bad generators, finite-order elliptic, ...)."""


class NonDiscreteSuspect(TransverseDynamicsError):
    """Two distinct short words of a free preset collided numerically."""


class InsufficientGrowth(TransverseDynamicsError):
    """Too little orbit data to regress a critical exponent; raw data attached."""

    def __init__(self, message, raw_data=None):
        super().__init__(message)
        self.raw_data = raw_data


class NonSummable(TransverseDynamicsError):
    """Patterson weights under/overflowed beyond compensated range."""


class PointOnBoundary(TransverseDynamicsError):
    """A point required to be strictly interior sits on (or outside) the boundary."""


class NotSmoothCertificate(TransverseDynamicsError):
    """Boundary point carries no valid supporting-hyperplane uniqueness certificate."""


class EmptyCell(TransverseDynamicsError):
    """Conformality cell has mass below the floor on one side of the comparison."""


class ConfigError(TransverseDynamicsError):
    """Invalid experiment configuration (CLI exit code 2)."""

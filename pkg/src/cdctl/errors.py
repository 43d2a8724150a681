"""Exception hierarchy shared by all cdctl modules.

Validation errors signal malformed or inconsistent inputs (CLI exit code 2),
numerical errors signal rank/singularity/divergence failures detected during
computation (CLI exit code 3).
"""


class CdctlError(Exception):
    """Base class for all cdctl errors."""


# -- validation ---------------------------------------------------------------

class DimensionMismatch(CdctlError):
    """Matrix dimensions are inconsistent with the two-array model."""


class ImproperSystem(CdctlError):
    """Transfer function has numerator degree above denominator degree."""


class NonIntegerDelay(CdctlError):
    """Transport delay is not an integer number of samples at this rate."""


class InvalidBandwidth(CdctlError):
    """Mid-ranging bandwidth ordering violated (SISO above TISO)."""


class ZeroColumn(CdctlError):
    """A basis column has zero norm."""


class ZeroMatrix(CdctlError):
    """Operation undefined for the all-zero matrix."""


class InfeasibleDimensions(CdctlError):
    """Requested synthetic system violates n_s >= n_y >= n_f >= 1."""


class FrequencyAboveNyquist(CdctlError):
    """Disturbance resonance above half the sample rate."""


class EmptySignal(CdctlError):
    """Spectral estimate requested for a signal with fewer than two samples."""


class BadSegmentation(CdctlError):
    """Welch segmentation does not divide the signal into blocks of >= 2."""


# -- numerical ----------------------------------------------------------------

class RankDeficient(CdctlError):
    """Response matrix rank below the level required by the factorization."""


class SingularSystem(CdctlError):
    """Regularized normal matrix is numerically singular."""


class PoleOnGrid(CdctlError):
    """Frequency response evaluated exactly at an imaginary-axis pole."""


class SensitivityZero(CdctlError):
    """Scalar sensitivity vanishes on the analysis grid."""


class SingularLoop(CdctlError):
    """Inner loop inverse of the robustness test failed at some frequency."""


class DegenerateDirection(CdctlError):
    """Direction orthogonal to one array's range; gain ratio undefined."""


class Diverged(CdctlError):
    """Closed-loop simulation diverged (instability)."""


VALIDATION_ERRORS = (
    DimensionMismatch,
    ImproperSystem,
    NonIntegerDelay,
    InvalidBandwidth,
    ZeroColumn,
    ZeroMatrix,
    InfeasibleDimensions,
    FrequencyAboveNyquist,
    EmptySignal,
    BadSegmentation,
)

NUMERICAL_ERRORS = (
    RankDeficient,
    SingularSystem,
    PoleOnGrid,
    SensitivityZero,
    SingularLoop,
    DegenerateDirection,
    Diverged,
)

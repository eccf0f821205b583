"""Exception types shared across the package.

Every category of contract violation gets its own class so callers can
distinguish "you passed garbage" (dimension/format errors) from "a model
assumption failed" (definiteness errors), which are reported, never swallowed.
"""


class KahlerVaeError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(KahlerVaeError):
    pass


class NonHermitianInput(KahlerVaeError):
    pass


class NotPSD(KahlerVaeError):
    """Matrix expected positive semi-definite has an eigenvalue below tolerance."""


class NotPD(KahlerVaeError):
    """Matrix expected positive definite has a nonpositive eigenvalue."""


class RelationNotSupported(KahlerVaeError):
    """Operation requires a circular complex Gaussian (relation parameter 0)."""


class InvalidRelation(KahlerVaeError):
    """Relation parameter violates |delta_k| < sigma_k."""


class UnknownIdentity(KahlerVaeError):
    pass


class NonFiniteEvaluation(KahlerVaeError):
    """A map returned NaN/Inf at a finite-difference stencil point."""


class EmptyAtlas(KahlerVaeError):
    pass


class EmptyDirections(KahlerVaeError):
    pass


class IndexOutOfRange(KahlerVaeError):
    pass


class DegenerateFit(KahlerVaeError):
    """Least-squares design matrix is rank deficient."""


class MissingAtlas(KahlerVaeError):
    """Geometric loss weight is positive but no atlas snapshot is available."""


class NonFiniteLoss(KahlerVaeError):
    """Training loss became NaN/Inf; carries the offending batch index."""

    def __init__(self, message, batch_index=None):
        super().__init__(message)
        self.batch_index = batch_index


class InsufficientCandidates(KahlerVaeError):
    pass


class InsufficientSupport(KahlerVaeError):
    pass


class ClampRateExceeded(KahlerVaeError):
    """More than the allowed fraction of log-det values hit the clamp bounds."""


class BadMagic(KahlerVaeError):
    pass


class TruncatedFile(KahlerVaeError):
    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class BadRecordLength(KahlerVaeError):
    pass


class CountTooLarge(KahlerVaeError):
    pass


class DisconnectedGraph(KahlerVaeError):
    def __init__(self, message, n_components=None):
        super().__init__(message)
        self.n_components = n_components

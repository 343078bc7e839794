"""Exception hierarchy shared across the package."""


class IvBoundsError(Exception):
    """Base class for all package errors."""


class DegenerateData(IvBoundsError):
    """Input data is rank deficient or otherwise unusable."""


class NotPositiveDefinite(IvBoundsError):
    """A covariance matrix failed a positive-definiteness check."""


class Irrelevance(IvBoundsError):
    """Instruments carry no signal for the treatment (A1 violated)."""


class DegenerateKappa(IvBoundsError):
    """Conditional moments sit on the Cauchy-Schwarz boundary."""


class DomainError(IvBoundsError):
    """Argument outside the mathematical domain of an operation."""


class Infeasible(IvBoundsError):
    """Requested leakage budget is below the minimum consistent with the data."""


class AllZeroTau(IvBoundsError):
    """Every per-instrument threshold is zero and the classical IV constraints conflict."""


class TooFewInstruments(IvBoundsError):
    """The operation needs at least two instruments."""


class NullNotRepairable(IvBoundsError):
    """PSD repair of the null covariance moved it too far from the estimate."""


class TooManyDiscarded(IvBoundsError):
    """More than half of the bootstrap replicates were infeasible."""


class UnachievableSNR(IvBoundsError):
    """No positive residual scales can produce the requested signal-to-noise ratios."""


class DegenerateDirection(IvBoundsError):
    """Randomized direction vectors leave a scale parameter underdetermined."""


class RankDeficient(IvBoundsError):
    """Regression design matrix is rank deficient."""


class ChainDiverged(IvBoundsError):
    """MCMC acceptance rate collapsed; the chain is stuck."""

"""Exception hierarchy shared by all modules."""


class HGError(Exception):
    """Base class for all errors raised by hgconj."""


class ConfigError(HGError, ValueError):
    pass


class NotEquilibrium(HGError):
    pass


class DomainExceeded(HGError):
    pass


# spectral
class SpectralRejection(HGError):
    """Spectrum does not satisfy the hypothesis of the requested construction."""


class NotHyperbolic(SpectralRejection):
    pass


class NotStableSpectrum(SpectralRejection):
    pass


class EmptyBlock(HGError):
    pass


class MatrixOverflow(HGError, OverflowError):
    pass


# flow
class FlowError(HGError):
    pass


class Diverged(FlowError):
    pass


class LeftDomain(FlowError):
    pass


class StepUnderflow(FlowError):
    pass


class NoEntry(FlowError):
    pass


class NoCertifiedBall(HGError):
    pass


# cutoff / quadrature / conjugacy
class UnboundedModification(HGError):
    pass


class HorizonExceeded(HGError):
    pass


class Inconclusive(HorizonExceeded):
    """Orbit neither captured nor excluded within the time horizon."""


class NonDecay(HGError):
    pass


class NotInRegionOfAttraction(HGError):
    pass


class NewtonDiverged(HGError):
    pass

"""Exception hierarchy shared across the package."""


class OTFError(Exception):
    """Base class for all errors raised by :mod:`otfilter`."""


class ConfigError(OTFError):
    """Invalid user configuration (bad schema, bounds, missing files)."""


class NumericalError(OTFError):
    """Base class for numerical failures."""


class InvalidMatrix(NumericalError, ValueError):
    pass


class NotPSD(NumericalError, ValueError):
    pass


class NonStationary(NumericalError):
    pass


class ShapeError(OTFError, ValueError):
    pass


class InsufficientData(NumericalError, ValueError):
    pass


class CollinearRegressors(NumericalError):
    pass


class RiccatiDivergence(NumericalError):
    pass


class DataVarianceSingular(NumericalError):
    pass


class ModelVarianceInvalid(NumericalError):
    def __init__(self, t, msg=None):
        self.t = t
        super().__init__(msg or f"model variance is not PSD at period {t}")


class ParseError(OTFError, ValueError):
    def __init__(self, msg, position):
        self.position = position
        super().__init__(f"{msg} at position {position}")


class EvalError(NumericalError, ValueError):
    pass


class UnboundParameter(EvalError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class OutOfBounds(OTFError, ValueError):
    pass


class NoFeasibleStart(NumericalError):
    pass


class BoundaryTooClose(NumericalError):
    pass


class LocalIdentificationFailure(NumericalError):
    pass


class DegenerateDistribution(NumericalError, ValueError):
    pass


class ParticleDegeneracy(NumericalError):
    def __init__(self, t):
        self.t = t
        super().__init__(f"all particle weights vanished at period {t}")

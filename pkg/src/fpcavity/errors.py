"""Exception types raised across the package.

All errors derive from :class:`CavityError` (itself a ``ValueError``) so callers
can catch the whole family at once.
"""


class CavityError(ValueError):
    pass


class UnstableGeometry(CavityError):
    pass


class NonPositiveInput(CavityError):
    pass


class NonPositiveTemperature(NonPositiveInput):
    pass


class NonPositiveTc(NonPositiveInput):
    pass


class TemperatureOutOfRange(CavityError):
    pass


class ZeroRoughness(CavityError):
    pass


class EmptyList(CavityError):
    pass


class NegativeEnergy(CavityError):
    pass


class InvalidDesign(CavityError):
    pass


class InsufficientData(CavityError):
    pass


class DegenerateRegime(CavityError):
    pass


class IdentifiabilityError(CavityError):
    pass


class NonOverlappingSupport(CavityError):
    pass


class NonFiniteResidual(CavityError):
    def __init__(self, message, parameters=None):
        super().__init__(message)
        self.parameters = parameters


class SingularJacobian(CavityError):
    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class FitDidNotConverge(CavityError):
    """Raised when the iteration budget runs out.

    ``result`` holds the last iterate so a diagnostic report can still be written.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DatasetParseError(CavityError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

"""Exception types shared across the package."""


class AmbinetError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AmbinetError, ValueError):
    pass


class SamplingError(AmbinetError, RuntimeError):
    """Rejection sampling ran out of retries."""


class RangeError(AmbinetError, ValueError):
    pass


class GeometryError(AmbinetError, ValueError):
    """A receiver or source lies outside the room."""


class FormatError(AmbinetError, ValueError):
    """Shapes, channel counts or sample rates do not agree."""


class NumericalError(AmbinetError, ArithmeticError):
    pass


class InputError(AmbinetError, ValueError):
    pass

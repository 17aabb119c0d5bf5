"""Exception hierarchy shared across the package."""


class HamadvError(Exception):
    """Base class for every domain error raised by hamadv."""


class UnsupportedOrder(HamadvError):
    pass


class DimensionMismatch(HamadvError):
    pass


class InvalidPotential(HamadvError, ValueError):
    pass


class StencilUndefined(HamadvError):
    """A finite-difference stencil point fell where the map is undefined."""

    def __init__(self, point, reason):
        super().__init__(f"map undefined at stencil point {point}: {reason}")
        self.point = point
        self.reason = reason


class MapUndefined(HamadvError):
    def __init__(self, point, reason):
        super().__init__(f"map undefined at {point}: {reason}")
        self.point = point
        self.reason = reason


class DegeneratePolygon(HamadvError):
    pass


class TurningPoint(HamadvError):
    pass


class RootBracketFailure(HamadvError):
    pass


class EnergyNotConserved(HamadvError):
    pass


class NonpositiveC(HamadvError):
    pass


class NoRoomForBump(HamadvError):
    pass


class IncompleteCertificate(HamadvError):
    pass


class ConfigError(HamadvError):
    pass


class ParseError(ConfigError):
    def __init__(self, msg, line, column):
        super().__init__(f"{msg} (line {line}, column {column})")
        self.line = line
        self.column = column


class ValidationError(ConfigError):
    def __init__(self, field, msg=""):
        super().__init__(f"{field}: {msg}" if msg else field)
        self.field = field

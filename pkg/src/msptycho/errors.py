"""Exception and warning types shared across the package."""


class DimensionMismatch(ValueError):
    pass


class InvalidVoltage(ValueError):
    pass


class UnknownCrystal(KeyError):
    pass


class GeometryTooCoarse(ValueError):
    pass


class TooLarge(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


class ZeroDenominator(ZeroDivisionError):
    pass


class ZeroNormSlice(ZeroDivisionError):
    pass


class ZeroData(ZeroDivisionError):
    pass


class ConfigError(ValueError):
    """Invalid or incomplete run configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ContainerError(ValueError):
    pass


class SizeMismatch(ContainerError):
    def __init__(self, expected, actual):
        super().__init__(f"expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


class MissingArtifact(FileNotFoundError):
    pass


class NonConvergenceWarning(UserWarning):
    pass


class DegenerateProjectionWarning(UserWarning):
    pass

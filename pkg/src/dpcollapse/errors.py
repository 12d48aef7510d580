"""Exception hierarchy shared by the compute modules and the CLI."""


class DPCollapseError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class NumericalError(DPCollapseError):
    """Base for errors that the CLI maps to the numerical exit code."""

    exit_code = 3


class ConfigError(DPCollapseError):
    """Base for configuration problems (CLI exit code 2)."""

    exit_code = 2


class PointSetNotEvaluable(NumericalError):
    pass


class GridTooCoarse(NumericalError):
    pass


class SupportNotCovered(NumericalError):
    pass


class SingularSelfEnergy(NumericalError):
    """Self-energy of point masses diverges."""


class CoincidentPoints(NumericalError):
    pass


class UnsupportedGeometry(NumericalError):
    pass


class IncompatibleGrids(NumericalError):
    pass


class ResourceLimit(NumericalError):
    pass


class SampleOutsideBall(NumericalError):
    pass


class ValidityDomain(NumericalError):
    """Displacement outside the regime where the quadratic rate law holds."""


class NumericalInconsistency(NumericalError):
    pass


class NonPositiveDensity(NumericalError):
    pass


class TimestepTooCoarse(NumericalError):
    pass


class GridUnderResolved(NumericalError):
    pass


class ConfigParse(ConfigError):
    pass


class UnknownDensityRef(ConfigError):
    pass


class ReportError(DPCollapseError):
    """Raised when a report cannot be written (IO exit code 4)."""

    exit_code = 4

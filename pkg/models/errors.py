"""Exception hierarchy for mecal. Every error maps to a process exit code."""
from typing import List, Optional, Sequence


class MecalError(Exception):
    """Base class for all domain errors."""
    exit_code = 1


class InputFileError(MecalError):
    """Input file missing or unreadable."""
    exit_code = 12


class ParseError(MecalError):
    """Malformed row in an input table."""
    exit_code = 3

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EnumValueError(ParseError):
    """Unknown enumerated token (e.g. platform)."""


class DuplicateRecordError(ParseError):
    """Repeated (gene_id, platform, replicate) triple."""


class DomainError(MecalError):
    """Value outside the mathematical domain of an operation."""
    exit_code = 4


class NestingError(MecalError):
    """Gene-set nesting A ⊂ B ⊂ C violated."""
    exit_code = 5

    def __init__(self, message: str, genes: Sequence[str] = ()):
        self.genes: List[str] = list(genes)
        super().__init__(message)


class InsufficientDataError(MecalError):
    """Too few genes in A for the requested operation."""
    exit_code = 6


class DegenerateCovarianceError(MecalError):
    """A covariance used as a denominator vanishes."""
    exit_code = 7

    def __init__(self, moment: str, value: float):
        self.moment = moment
        self.value = value
        super().__init__(f"degenerate covariance: {moment} = {value!r} is numerically zero")


class CalibrationBlockedError(MecalError):
    """A variance component required by a calibration path is negative."""
    exit_code = 8

    def __init__(self, component: str, value: float, source: str):
        self.component = component
        self.value = value
        self.source = source
        super().__init__(
            f"calibration blocked: {component} = {value:.6g} < 0 is required by the "
            f"{source} path; increase n in set A or review the model assumptions"
        )


class InstabilityError(MecalError):
    """Too many bootstrap replicates were degenerate."""
    exit_code = 9


class ExperimentError(MecalError):
    """A Monte-Carlo experiment skipped too many replications or is ill-posed."""
    exit_code = 10


class ConfigError(MecalError):
    """Configuration failed schema validation."""
    exit_code = 11

    def __init__(self, message: str, field_path: str = ""):
        self.field_path = field_path
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)

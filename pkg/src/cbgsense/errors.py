"""Exception hierarchy.

Every error carries a stable machine-readable ``code`` that the CLI writes
into its JSON error report. ``DomainError`` subclasses map to exit code 1,
``UsageError`` subclasses to exit code 2.
"""

from __future__ import annotations


class CbgError(Exception):
    code = "E_INTERNAL"


class DomainError(CbgError):
    code = "E_DOMAIN"


class UsageError(CbgError):
    code = "E_USAGE"


# geometry
class InvalidDesign(DomainError):
    code = "E_INVALID_DESIGN"


class ResolutionTooCoarse(DomainError):
    code = "E_RESOLUTION_TOO_COARSE"


# fdtd-core
class CourantViolation(DomainError):
    code = "E_COURANT"


class DomainTooSmall(DomainError):
    code = "E_DOMAIN_TOO_SMALL"


class NumericalBlowup(DomainError):
    code = "E_BLOWUP"


class FrequencyNotRecorded(DomainError):
    code = "E_FREQ_NOT_RECORDED"


# em-analysis
class SeriesTooShort(DomainError):
    code = "E_SERIES_TOO_SHORT"


class NoPeak(DomainError):
    code = "E_NO_PEAK"


class ZeroReference(DomainError):
    code = "E_ZERO_REFERENCE"


class PlaneTooSmall(DomainError):
    code = "E_PLANE_TOO_SMALL"


class EmptyFarField(DomainError):
    code = "E_EMPTY_FARFIELD"


class NoMonitor(DomainError):
    code = "E_NO_MONITOR"


# spin-odmr
class InvalidContrast(DomainError):
    code = "E_INVALID_CONTRAST"


class NonPositiveRate(DomainError):
    code = "E_NONPOSITIVE_RATE"


class NoResonance(DomainError):
    code = "E_NO_RESONANCE"


class NoConvergence(DomainError):
    code = "E_NO_CONVERGENCE"


class MissingReference(DomainError):
    code = "E_MISSING_REFERENCE"


class InsufficientSpan(DomainError):
    code = "E_INSUFFICIENT_SPAN"


# sweep-driver
class EmptySpec(DomainError):
    code = "E_EMPTY_SPEC"


class NoSuccessfulJobs(DomainError):
    code = "E_NO_SUCCESSFUL_JOBS"


class CorruptStore(DomainError):
    code = "E_CORRUPT_STORE"


# cli-io
class ParseError(UsageError):
    code = "E_PARSE"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class UnknownKey(UsageError):
    code = "E_UNKNOWN_KEY"


class MissingRequired(UsageError):
    code = "E_MISSING_REQUIRED"


class BadGridDump(DomainError):
    code = "E_BAD_GRIDDUMP"

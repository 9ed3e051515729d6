"""Exception types shared across the package.

Three broad families map onto the CLI exit codes: configuration problems
(exit 2), data/ingestion problems (exit 3), and numeric failures (exit 4).
"""


class CommtraceError(Exception):
    """Base class for all package-specific errors."""


# --- configuration (exit code 2) -------------------------------------------

class ConfigError(CommtraceError):
    pass


class BadConfig(ConfigError):
    """Synthetic-data configuration outside its documented ranges."""


# --- data / ingestion (exit code 3) -----------------------------------------

class DataError(CommtraceError):
    pass


class MalformedRow(DataError):
    """Wrong column count, non-numeric field, or bad header in a data file."""


class NonMonotoneFrameIndex(DataError):
    pass


class TooManyFrames(DataError):
    pass


class UnknownEnumLevel(DataError):
    pass


class DuplicateParticipantId(DataError):
    pass


class DanglingRecordingRef(DataError):
    """A manifest record points at a missing file or an unknown parent."""


class MissingLabels(DataError):
    pass


class MissingPrerequisite(DataError):
    """A pipeline stage was invoked before the stages it depends on."""


class LengthMismatch(DataError):
    pass


class NoReferenceSpeech(DataError):
    pass


class EmptyList(DataError):
    pass


class UnsortedInput(DataError):
    pass


class ZeroDuration(DataError):
    pass


class NoShifts(DataError):
    pass


class InsufficientData(DataError):
    pass


class EmptyHalf(DataError):
    pass


class NoData(DataError):
    pass


class EmptyDataset(DataError):
    pass


class TooShort(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class ConstantInput(DataError):
    pass


class TooFewObservations(DataError):
    pass


# --- numerics (exit code 4) --------------------------------------------------

class NumericError(CommtraceError):
    pass


class NonFiniteLoss(NumericError):
    pass


class RankDeficientDesign(NumericError):
    pass


class DomainError(NumericError):
    pass


class DegenerateScoresWarning(UserWarning):
    """All fusion correlations vanished; equal weights were substituted."""

"""Exception hierarchy shared by all pipeline stages.

Exit-code mapping used by the CLI: ConfigError -> 2, InvariantViolation -> 4,
everything else derived from LaicError -> 3.
"""


class LaicError(Exception):
    exit_code = 3


class ConfigError(LaicError):
    exit_code = 2


class InvariantViolation(LaicError):
    """A constructed or loaded object breaks one of its declared invariants."""

    exit_code = 4


class StageError(LaicError):
    """Wraps any failure inside a pipeline stage, annotated with the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        if isinstance(cause, LaicError):
            self.exit_code = cause.exit_code


# --- binary format / IO ---

class EmbFormatError(LaicError):
    pass


class MagicMismatch(EmbFormatError):
    pass


class TruncatedFile(EmbFormatError):
    pass


class NonFiniteValue(InvariantViolation):
    pass


class DimensionZero(EmbFormatError):
    pass


class IoFailure(LaicError):
    pass


class ZeroRow(LaicError):
    pass


# --- vocabulary selection ---

class KTooLarge(LaicError):
    pass


class EmptyCandidateSet(LaicError):
    pass


# --- ridge representation ---

class DimMismatch(LaicError):
    pass


class FactorizationFailure(LaicError):
    pass


# --- clustering / metrics ---

class NonSquare(LaicError):
    pass


class LengthMismatch(LaicError):
    pass


# --- pseudo-label filtering ---

class KHatTooLarge(LaicError):
    pass


class EmptySelection(LaicError):
    pass


# --- semantic-center learning ---

class ZeroVector(LaicError):
    pass


class EmptyBatch(LaicError):
    pass


class MissingView(LaicError):
    pass


class DivergenceDetected(LaicError):
    pass


# --- synthetic benchmark ---

class BadDims(LaicError):
    pass

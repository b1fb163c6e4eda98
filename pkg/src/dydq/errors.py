"""Exception types shared across the package.

Data errors (bad input files, inconsistent datasets) derive from DataError;
configuration problems from ConfigError.  The CLI maps these onto distinct
exit codes.
"""


class DydqError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(DydqError):
    """Invalid run configuration (bad flag, missing path, unknown enum value)."""


class DataError(DydqError):
    """Invalid or inconsistent input data."""


class EmptyDataset(DataError):
    """Input file contains no interactions."""


class MalformedLine(DataError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateInteraction(DataError):
    """An (user, image) pair or image key occurs more than once."""


class DegenerateEmbedding(DataError):
    """A zero-norm vector where a direction is required."""


class TruncatedFile(DataError):
    """Binary embedding file ends mid-record or mid-header."""


class EmbeddingFormatError(DataError):
    """Bad magic, unsupported version, or inconsistent header fields."""


class MissingEmbedding(DataError):
    def __init__(self, image_id: int):
        super().__init__(f"no embedding for image id {image_id}")
        self.image_id = image_id


class NoPositives(DataError):
    def __init__(self, user_id: int):
        super().__init__(f"user {user_id} has no train images")
        self.user_id = user_id


class MissingImageFile(DataError):
    def __init__(self, image_id: int, detail: str = ""):
        msg = f"no pixel data for image id {image_id}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.image_id = image_id


class EmptyReview(DataError):
    """Review text is empty after trimming; no prompt can be built."""


class GeneratedImageMissing(DataError):
    def __init__(self, filename: str):
        super().__init__(f"expected generated image file {filename!r} not found")
        self.filename = filename


class PngCorrupt(DataError):
    """PNG signature, chunk structure, or CRC check failed."""


class CheckpointFormatError(DataError):
    """Model checkpoint header or parameter blob is malformed."""


class TrainingDiverged(DydqError):
    """A parameter became non-finite during optimization."""


class MeterError(DydqError):
    """Misuse of the metering scope (e.g. nested measurement)."""

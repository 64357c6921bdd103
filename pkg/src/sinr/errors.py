"""Exception hierarchy. Each class carries the process exit code the CLI maps it to."""


class SinrError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class IoError(SinrError):
    """Filesystem-level failure (missing file, unwritable path)."""

    exit_code = 2


class FormatError(SinrError):
    """A file exists but its contents violate the expected format."""

    exit_code = 3


class MagicError(FormatError):
    """Model file does not start with the expected magic bytes."""


class VersionError(FormatError):
    """Model file declares an unsupported format version."""


class TruncationError(FormatError):
    """Model file ends before its declared payload/checksum."""


class ChecksumError(FormatError):
    """Model file checksum does not match its contents."""


class KeyFormatError(FormatError):
    """Key text is not valid (bad grammar, non-binary characters, bad strategy)."""


class ArgumentError(SinrError):
    """Caller passed inconsistent values (shape mismatch, out-of-range count)."""

    exit_code = 4


class StructuralError(ArgumentError):
    """Network pieces do not fit together (layer widths, key/spec congruence)."""


class DivergenceError(SinrError):
    """Training produced a non-finite loss or gradient."""

    exit_code = 5

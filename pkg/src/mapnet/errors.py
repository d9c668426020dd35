"""Exception hierarchy shared by all mapnet modules.

Each CLI-visible failure class carries a process exit code so the command
layer can translate exceptions uniformly.
"""


class MapNetError(Exception):
    """Base class for all mapnet errors."""

    exit_code = 1


class ConfigError(MapNetError):
    """Invalid configuration value, range, or unknown key."""

    exit_code = 2


class ShapeError(MapNetError):
    """Operand dimensions are incompatible."""

    exit_code = 2


class UsageError(MapNetError):
    """An API was called outside its contract."""

    exit_code = 2


class DataError(MapNetError):
    """Input data violates a documented precondition (e.g. non-binary mask)."""

    exit_code = 2


class IOFailure(MapNetError):
    """Filesystem or image-format failure."""

    exit_code = 3


class FormatError(IOFailure):
    """A file does not match its declared binary format."""

    exit_code = 3


class CorruptionError(IOFailure):
    """A file is structurally valid but truncated or inconsistent."""

    exit_code = 3


class NumericError(MapNetError):
    """Non-finite values where finite ones are required (e.g. training loss)."""

    exit_code = 4


class CheckpointError(MapNetError):
    """Checkpoint could not be read: bad magic, version, or truncation."""

    exit_code = 5


class GenerationError(MapNetError):
    """Synthetic scene generation failed to satisfy its constraints."""

    exit_code = 4

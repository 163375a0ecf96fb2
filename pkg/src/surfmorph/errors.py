"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class SurfmorphError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SurfmorphError):
    """Invalid configuration values or command-line arguments."""


class DataError(SurfmorphError):
    """Malformed or inconsistent input data (files, meshes, datasets)."""


class ObjParseError(DataError):
    """OBJ file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnsupportedFormatError(DataError):
    """Input is syntactically valid but uses an unsupported feature."""


class NumericalError(SurfmorphError):
    """Numerical failure: NaN gradients, divergence, degenerate geometry."""


class PoseEstimationError(NumericalError):
    """Pose could not be recovered (too few or degenerate correspondences)."""


class TapeReuseError(SurfmorphError):
    """A backward tape was consumed more than once."""

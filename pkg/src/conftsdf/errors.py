"""Exception types shared across the package."""


class ConfTsdfError(Exception):
    """Base class for all errors raised by this package."""


class BehindCamera(ConfTsdfError):
    """Point has non-positive depth and cannot be projected."""


class InvalidDepth(ConfTsdfError):
    """Depth value must be strictly positive."""


class ShapeError(ConfTsdfError):
    """Image dimensions or feature dimensions do not match."""


class DegenerateRay(ConfTsdfError):
    """Ray of zero length; weight is undefined."""


class FormatError(ConfTsdfError):
    """Malformed binary file (PFM, PLY, snapshot)."""


class ParseError(ConfTsdfError):
    """Malformed text file; carries the offending line number."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class OrderError(ConfTsdfError):
    """Timestamps are not strictly increasing."""


class ConfigError(ConfTsdfError):
    """Invalid configuration value or unknown key."""


class DataError(ConfTsdfError):
    """Dataset inconsistency (missing file, frame without pose, ...)."""


class EmptyMesh(ConfTsdfError):
    """Operation requires a mesh with at least one vertex."""


class ProbeUnobserved(ConfTsdfError):
    """Probe voxel was never observed in the given snapshots."""


class IoError(ConfTsdfError):
    """I/O failure; carries the path involved."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path

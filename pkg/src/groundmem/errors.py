"""Exception types shared across the package."""


class GroundmemError(Exception):
    """Base class for all package-specific errors."""


class NonPositiveDepthError(GroundmemError):
    """A ray was asked to travel a zero or negative distance."""


class BehindCameraError(GroundmemError):
    """A world point lies at or behind the camera plane and cannot be projected."""


class DimensionMismatchError(GroundmemError):
    """Array shapes passed to an operation do not agree."""


class MalformedSnapshotError(GroundmemError):
    """A binary snapshot could not be parsed.

    The message includes the byte offset at which parsing failed.
    """


class MalformedTableError(GroundmemError):
    """A class-embedding table file could not be parsed."""


class PlacementFailureError(GroundmemError):
    """Rejection sampling ran out of retries while placing scene content."""


class UnknownClassError(GroundmemError):
    """A class name was referenced that the embedding table does not contain."""


class MalformedStreamError(GroundmemError):
    """A detection stream violates the evaluation protocol's preconditions."""


class ConfigError(GroundmemError):
    """A run configuration is invalid or incomplete (CLI exit code 2)."""


class DataError(GroundmemError):
    """Generated data is missing or unreadable (CLI exit code 3)."""

"""Exception types shared across the package."""


class GridPatrolError(Exception):
    """Base class for all package-specific errors."""


class ParseError(GridPatrolError):
    """Malformed map file (ragged rows, unknown characters, bad header)."""


class EmptyRoadNetwork(GridPatrolError):
    """Map contains no road cell, so there is nothing to monitor."""


class InvariantViolation(GridPatrolError):
    """A documented precondition or state invariant was broken by the caller."""


class PlacementError(GridPatrolError):
    """More agents requested than distinct road cells available."""


class ArityError(GridPatrolError):
    """Per-agent argument list does not match the number of agents."""


class StaleLogError(GridPatrolError):
    """A visit-log entry falls outside the sync window it was submitted for."""


class ShapeError(GridPatrolError):
    """Array shape does not match the network architecture."""


class NumericError(GridPatrolError):
    """Non-finite values where finite ones are required."""


class CheckpointError(GridPatrolError):
    """Base class for checkpoint serialization failures."""


class ChecksumError(CheckpointError):
    """Checkpoint bytes are truncated or corrupted."""


class VersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


class ArchMismatch(GridPatrolError):
    """Checkpoint architecture does not fit the requested run."""


class EmptyTrace(GridPatrolError):
    """Metric requested on a trace with no steps."""


class ConfigError(GridPatrolError):
    """Invalid or missing run configuration."""

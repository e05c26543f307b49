"""Exception hierarchy shared across the package.

FormatError covers byte-level violations of the on-disk container formats
(bad magic, truncation, structural inconsistency). ValidationError covers
semantically invalid data that is structurally well formed (dangling split
index, label id out of range, dimension mismatch). MetricsError covers
evaluation requests whose inputs make a metric undefined.
"""


class SignalError(Exception):
    """Base class for all package-specific errors."""


class FormatError(SignalError):
    """A serialized file violates its byte-level format contract."""


class ValidationError(SignalError):
    """Structurally readable data violates a semantic invariant."""


class MetricsError(SignalError):
    """A metric is undefined for the given inputs."""

"""Error taxonomy: everything viz raises derives from VizError."""

__all__ = ["VizError", "SchemaMismatch", "MissingField"]


class VizError(Exception):
    """Base class for all rendering errors."""


class SchemaMismatch(VizError):
    """An artifact is absent, unreadable, or disagrees with its sidecar."""


class MissingField(VizError):
    """The requested field or column is not present in the artifact."""

"""Exception hierarchy shared across the package."""


class AnnodiffError(Exception):
    """Base class for all errors raised by annodiff."""


class ParseError(AnnodiffError):
    """Input is not valid UTF-8 JSON. Carries the byte offset of the defect."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class SchemaError(AnnodiffError):
    """Structurally malformed record: missing field, wrong type, bad layout."""


class IntegrityError(AnnodiffError):
    """Cross-record inconsistency: dangling reference or duplicate id."""


class GeometryError(AnnodiffError):
    """Operation on degenerate or incompatible geometry."""


class DegenerateShape(GeometryError):
    """Shape vanishes under rasterization; the pair is excluded, not scored."""


class StatsError(AnnodiffError):
    """Statistic undefined for the given population."""


class EvalError(AnnodiffError):
    """Detection evaluation received inconsistent inputs."""

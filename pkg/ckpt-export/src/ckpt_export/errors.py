"""Error taxonomy for the exporter."""


class ExportError(Exception):
    """Base class for everything this tool raises on purpose."""


class CheckpointError(ExportError):
    """Checkpoint archive is unreadable or holds something disallowed."""


class ManifestError(ExportError):
    """Name-map manifest is malformed."""


class MappingError(ExportError):
    """A rule produced a duplicate or undemanded canonical name."""


class MissingParameter(ExportError):
    """A demanded canonical name was never produced."""


class ShapeMismatch(ExportError):
    """A mapped tensor's shape or dtype does not fit its demand."""


class WeightFormatError(ExportError):
    """A .tlwt file violates the documented layout."""


class ChecksumMismatch(WeightFormatError):
    """Stored CRC does not match the payload bytes."""


class VerifyError(ExportError):
    """Round-trip comparison between checkpoint and .tlwt failed."""

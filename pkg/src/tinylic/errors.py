"""Exception taxonomy shared across the codec.

Everything raised on purpose derives from TinylicError so callers can catch
one base. The CLI maps subfamilies to exit codes: format errors -> 2,
model mismatch -> 3, decode errors -> 4.
"""


class TinylicError(Exception):
    """Base class for all codec errors."""


class ShapeError(TinylicError):
    """Tensor arguments disagree with the operation's shape contract."""


class DimensionError(ShapeError):
    """Spatial dimensions violate a divisibility or size requirement."""


class ConfigError(TinylicError):
    """A network or schedule configuration is internally inconsistent."""


class FormatError(TinylicError):
    """Base class for serialized-artifact problems (containers, weight files)."""


class BadMagic(FormatError):
    """The stream does not start with the expected magic bytes."""


class UnsupportedVersion(FormatError):
    """The stream's version byte is newer than this implementation."""


class TruncatedStream(FormatError):
    """The stream ends before its declared contents do."""


class ChecksumMismatch(FormatError):
    """Stored checksum disagrees with the recomputed one."""


class DuplicateName(FormatError):
    """A weight file declares the same tensor name twice."""


class MissingParameter(TinylicError):
    """A model parameter demanded by the configuration is absent."""


class ModelMismatch(TinylicError):
    """Bitstream was produced by a different model than the one supplied."""


class DecodeError(TinylicError):
    """Entropy decoding failed (exhausted or corrupt stream)."""


class MinSizeError(TinylicError):
    """Input image is too small for the requested metric."""

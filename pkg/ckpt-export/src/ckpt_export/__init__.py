"""Checkpoint exporter for the tinylic codec.

Reads training checkpoints without their framework, relabels tensors to
the canonical roster of a network profile via an editable manifest, and
writes `.tlwt` weight files per the codec's published format. The
conversion is bit-preserving; `verify` proves it after the fact.
"""

from .ckpt import load_checkpoint
from .convert import convert, verify
from .demand import PROFILES, Profile, cosine_groups, named_profile, \
    parameter_count, roster
from .errors import (
    CheckpointError,
    ChecksumMismatch,
    ExportError,
    ManifestError,
    MappingError,
    MissingParameter,
    ShapeMismatch,
    VerifyError,
    WeightFormatError,
)
from .namemap import NameMap
from .tlwt import file_checksum, fnv1a64, model_hash, read_tlwt, write_tlwt

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ChecksumMismatch",
    "ExportError",
    "ManifestError",
    "MappingError",
    "MissingParameter",
    "NameMap",
    "PROFILES",
    "Profile",
    "ShapeMismatch",
    "VerifyError",
    "WeightFormatError",
    "convert",
    "cosine_groups",
    "file_checksum",
    "fnv1a64",
    "load_checkpoint",
    "model_hash",
    "named_profile",
    "parameter_count",
    "read_tlwt",
    "roster",
    "verify",
    "write_tlwt",
]

"""Bitstream container: one header plus five independent code segments.

Fixed little-endian header layout (52 bytes):

    offset  size  field
    0       4     magic "TLIC"
    4       1     version (currently 1)
    5       1     flags (reserved, zero)
    6       4     width  u32, pre-padding pixels
    10      4     height u32, pre-padding pixels
    14      1     lambda_index u8 (0..7)
    15      8     model_hash u64
    23      1     group_count u8 (always 4)
    24      8     group_sizes u16 * 4
    32      20    segment_lengths u32 * 5 (hyper, then stages 1..4)
    52      ...   segment payloads in that order

Segment boundaries are explicit so a decoder can stop after any stage
prefix; the file length must equal 52 plus the declared segment lengths.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import BadMagic, FormatError, TruncatedStream, UnsupportedVersion

CONTAINER_MAGIC = b"TLIC"
CONTAINER_VERSION = 1
HEADER_BYTES = 52
GROUP_COUNT = 4
SEGMENT_NAMES = ("hyper", "stage1", "stage2", "stage3", "stage4")
LAMBDA_LEVELS = 8
FILE_EXTENSION = ".tlic"


@dataclass(frozen=True)
class Container:
    """Decoded header fields plus the five payload segments."""

    width: int
    height: int
    lambda_index: int
    model_hash: int
    group_sizes: tuple[int, int, int, int]
    segments: tuple[bytes, bytes, bytes, bytes, bytes]

    def __post_init__(self) -> None:
        if not (1 <= self.width <= 0xFFFFFFFF and 1 <= self.height <= 0xFFFFFFFF):
            raise FormatError(f"bad image dims {self.width}x{self.height}")
        if not 0 <= self.lambda_index < LAMBDA_LEVELS:
            raise FormatError(f"lambda_index {self.lambda_index} outside 0..{LAMBDA_LEVELS - 1}")
        if not 0 <= self.model_hash <= 0xFFFFFFFFFFFFFFFF:
            raise FormatError("model_hash must fit in 64 bits")
        if len(self.group_sizes) != GROUP_COUNT:
            raise FormatError(f"need {GROUP_COUNT} group sizes")
        if any(not 1 <= g <= 0xFFFF for g in self.group_sizes):
            raise FormatError(f"group sizes must be u16 >= 1: {self.group_sizes}")
        if len(self.segments) != len(SEGMENT_NAMES):
            raise FormatError(f"need {len(SEGMENT_NAMES)} segments")

    @property
    def total_bytes(self) -> int:
        return HEADER_BYTES + sum(len(s) for s in self.segments)

    @property
    def pixels(self) -> int:
        return self.width * self.height

    def bpp(self) -> float:
        return 8.0 * self.total_bytes / self.pixels


def write_container(c: Container) -> bytes:
    out = bytearray()
    out += CONTAINER_MAGIC
    out.append(CONTAINER_VERSION)
    out.append(0)  # flags
    out += struct.pack("<II", c.width, c.height)
    out.append(c.lambda_index)
    out += struct.pack("<Q", c.model_hash)
    out.append(GROUP_COUNT)
    out += struct.pack("<4H", *c.group_sizes)
    out += struct.pack("<5I", *(len(s) for s in c.segments))
    assert len(out) == HEADER_BYTES
    for s in c.segments:
        out += s
    return bytes(out)


def read_container(data: bytes) -> Container:
    if len(data) < HEADER_BYTES:
        raise TruncatedStream(f"container needs {HEADER_BYTES} header bytes, got {len(data)}")
    if data[:4] != CONTAINER_MAGIC:
        raise BadMagic("not a codec container")
    version = data[4]
    if version != CONTAINER_VERSION:
        raise UnsupportedVersion(f"container version {version}, expected {CONTAINER_VERSION}")
    width, height = struct.unpack_from("<II", data, 6)
    lambda_index = data[14]
    (model_hash,) = struct.unpack_from("<Q", data, 15)
    group_count = data[23]
    if group_count != GROUP_COUNT:
        raise FormatError(f"group_count {group_count}, expected {GROUP_COUNT}")
    group_sizes = struct.unpack_from("<4H", data, 24)
    seg_lengths = struct.unpack_from("<5I", data, 32)
    expected = HEADER_BYTES + sum(seg_lengths)
    if len(data) < expected:
        raise TruncatedStream(f"container declares {expected} bytes, has {len(data)}")
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after payload")
    segments = []
    pos = HEADER_BYTES
    for n in seg_lengths:
        segments.append(bytes(data[pos:pos + n]))
        pos += n
    return Container(width=width, height=height, lambda_index=lambda_index,
                     model_hash=model_hash, group_sizes=tuple(group_sizes),
                     segments=tuple(segments))


def inspect_container(data: bytes) -> dict:
    """Header summary plus per-segment byte and bpp accounting.

    Component bpp values (header + five segments) sum to the total bpp.
    """
    c = read_container(data)
    px = c.pixels
    components = [{"name": "header", "bytes": HEADER_BYTES,
                   "bpp": 8.0 * HEADER_BYTES / px}]
    for name, seg in zip(SEGMENT_NAMES, c.segments):
        components.append({"name": name, "bytes": len(seg), "bpp": 8.0 * len(seg) / px})
    return {
        "width": c.width,
        "height": c.height,
        "lambda_index": c.lambda_index,
        "model_hash": f"{c.model_hash:016x}",
        "group_sizes": list(c.group_sizes),
        "components": components,
        "total_bytes": c.total_bytes,
        "total_bpp": c.bpp(),
    }

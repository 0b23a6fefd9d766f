"""Weight-file (.tlwt) writer and reader.

Implemented from the published format description (docs/weights.md in
the codec repository); deliberately independent of the codec's own code
so a written file proves the two sides agree on the bytes, not on a
shared implementation. Little-endian throughout; tensor payloads are
float32 in C order; the trailing CRC-32 covers payload bytes only, in
file order.
"""

import struct
import zlib

import numpy as np

from .errors import ChecksumMismatch, WeightFormatError

MAGIC = b"TLWT"
VERSION = 1


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def write_tlwt(profile_text: str, tensors: dict[str, np.ndarray]) -> bytes:
    out = bytearray()
    out += MAGIC
    out.append(VERSION)
    ptext = profile_text.encode("utf-8")
    out += struct.pack("<I", len(ptext))
    out += ptext
    out += struct.pack("<I", len(tensors))
    crc = 0
    for name, arr in tensors.items():
        if arr.dtype != np.float32:
            raise WeightFormatError(f"{name}: must be float32, got {arr.dtype}")
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise WeightFormatError(f"tensor name too long: {len(nb)} bytes")
        if arr.ndim > 0xFF:
            raise WeightFormatError(f"{name}: rank {arr.ndim} too high")
        out += struct.pack("<H", len(nb))
        out += nb
        out.append(arr.ndim)
        for d in arr.shape:
            out += struct.pack("<I", d)
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        crc = zlib.crc32(data, crc)
        out += data
    out += struct.pack("<I", crc & 0xFFFFFFFF)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightFormatError(
                f"truncated: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_tlwt(data: bytes) -> tuple[str, dict[str, np.ndarray]]:
    """Parse and integrity-check a weight file.

    Returns (profile_text, tensors in file order). Raises
    WeightFormatError on any layout violation and ChecksumMismatch when
    the payload bytes do not reproduce the stored CRC.
    """
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise WeightFormatError("not a weight file (bad magic)")
    version = r.u8()
    if version != VERSION:
        raise WeightFormatError(f"unsupported version {version}")
    profile_text = r.take(r.u32()).decode("utf-8")
    count = r.u32()
    tensors: dict[str, np.ndarray] = {}
    crc = 0
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        if name in tensors:
            raise WeightFormatError(f"duplicate tensor name {name!r}")
        rank = r.u8()
        shape = tuple(r.u32() for _ in range(rank))
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        payload = r.take(nbytes)
        crc = zlib.crc32(payload, crc)
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
        tensors[name] = arr.astype(np.float32)
    stored = r.u32()
    if r.pos != len(data):
        raise WeightFormatError(f"{len(data) - r.pos} trailing bytes")
    if stored != (crc & 0xFFFFFFFF):
        raise ChecksumMismatch(
            f"payload CRC {crc & 0xFFFFFFFF:#010x} != stored {stored:#010x}")
    return profile_text, tensors


def model_hash(profile_text: str, checksum: int) -> int:
    """The 64-bit identity the codec embeds in bitstream headers."""
    return fnv1a64(profile_text.encode("utf-8") + struct.pack("<I", checksum))


def file_checksum(data: bytes) -> int:
    """The stored CRC field of a structurally valid file."""
    if len(data) < 4:
        raise WeightFormatError("file shorter than its checksum field")
    return struct.unpack("<I", data[-4:])[0]

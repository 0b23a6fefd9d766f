"""Weight file format and deterministic initialization.

A weight file is a flat list of named float32 tensors plus the profile text
of the network they belong to:

    magic   "TLWT"
    version u8 (currently 1)
    profile u32 byte length + UTF-8 text
    count   u32
    tensors count times:
        name  u16 byte length + UTF-8 text
        ndim  u8
        dims  u32 * ndim
        data  float32 little-endian, C order
    crc32   u32, IEEE, over all tensor data bytes in file order

Deterministic init derives one SplitMix64 stream per canonical tensor name
(seed xor FNV-1a of the name), so adding or removing a tensor never perturbs
the others and the same (profile, seed) reproduces bit-identical files on
any platform. Weight matrices draw uniform(-0.02, 0.02) scaled by
1/sqrt(fan_in); biases are zero; normalization gains are one; factorized
scales are positive by construction.
"""

from __future__ import annotations

import struct
import zlib
from typing import Iterator, Mapping

import numpy as np

from .errors import (
    BadMagic,
    ChecksumMismatch,
    ConfigError,
    DuplicateName,
    FormatError,
    MissingParameter,
    ShapeError,
    TruncatedStream,
    UnsupportedVersion,
)
from .mcm import SliceSpec, cosine_slice, mcm_parameter_shapes
from .transform import NetworkConfig, transform_parameter_shapes

WEIGHTS_MAGIC = b"TLWT"
WEIGHTS_VERSION = 1

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def splitmix64_stream(seed: int, count: int) -> np.ndarray:
    """First `count` outputs of SplitMix64 from `seed`, as uint64."""
    with np.errstate(over="ignore"):
        states = _U64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN * (
            np.arange(1, count + 1, dtype=np.uint64))
        z = states
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        return z ^ (z >> _U64(31))


def _stream_floats(seed: int, name: str, count: int) -> np.ndarray:
    """Per-name uniform [0, 1) doubles, bit-stable across platforms."""
    bits = splitmix64_stream(seed ^ fnv1a64(name.encode("utf-8")), count)
    return (bits >> _U64(11)).astype(np.float64) * (2.0 ** -53)


class WeightStore(Mapping):
    """Ordered name -> float32 ndarray mapping with its profile text."""

    def __init__(self, profile: str, tensors: dict[str, np.ndarray] | None = None):
        self.profile = profile
        self._tensors: dict[str, np.ndarray] = {}
        for name, arr in (tensors or {}).items():
            self.put(name, arr)

    def put(self, name: str, arr: np.ndarray) -> None:
        if name in self._tensors:
            raise DuplicateName(f"tensor {name!r} already present")
        if arr.dtype != np.float32:
            raise ShapeError(f"tensor {name!r} must be float32, got {arr.dtype}")
        self._tensors[name] = np.ascontiguousarray(arr)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    @property
    def checksum(self) -> int:
        """CRC32 over all tensor payload bytes in insertion order."""
        crc = 0
        for arr in self._tensors.values():
            crc = zlib.crc32(arr.astype("<f4").tobytes(), crc)
        return crc & 0xFFFFFFFF

    @property
    def config(self) -> NetworkConfig:
        return NetworkConfig.from_profile(self.profile)


def model_parameter_shapes(cfg: NetworkConfig,
                           spec: SliceSpec | None = None) -> dict[str, tuple]:
    """Every parameter the full codec demands: transforms, context nets,
    and the per-channel factorized model for the hyper-latents."""
    if spec is None:
        spec = cosine_slice(cfg.latent_channels)
    shapes = transform_parameter_shapes(cfg)
    shapes.update(mcm_parameter_shapes(cfg.latent_channels, cfg.prior_channels, spec))
    c6 = cfg.hyper_latent_channels
    shapes["fm.mu"] = (c6,)
    shapes["fm.sigma"] = (c6,)
    return shapes


def parameter_count(cfg: NetworkConfig, spec: SliceSpec | None = None) -> int:
    return sum(int(np.prod(s)) for s in model_parameter_shapes(cfg, spec).values())


def seeded_init(cfg: NetworkConfig, seed: int,
                spec: SliceSpec | None = None) -> WeightStore:
    """Deterministic random weights for a profile; same seed, same bytes."""
    store = WeightStore(profile=cfg.to_profile())
    for name, shape in model_parameter_shapes(cfg, spec).items():
        count = int(np.prod(shape))
        if name.endswith(".bias"):
            arr = np.zeros(shape, dtype=np.float32)
        elif ".ln1.weight" in name or ".ln2.weight" in name:
            arr = np.ones(shape, dtype=np.float32)
        elif name == "fm.sigma":
            u = _stream_floats(seed, name, count)
            arr = np.exp((u * 2.0 - 1.0) * 0.25).astype(np.float32).reshape(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) >= 2 else 1
            u = _stream_floats(seed, name, count)
            arr = ((u * 2.0 - 1.0) * 0.02 / np.sqrt(fan_in)).astype(np.float32)
            arr = arr.reshape(shape)
        store.put(name, arr)
    return store


def check_complete(store: WeightStore, cfg: NetworkConfig,
                   spec: SliceSpec | None = None) -> None:
    """Demand-set validation: exactly the right names with the right shapes."""
    demanded = model_parameter_shapes(cfg, spec)
    for name, shape in demanded.items():
        if name not in store:
            raise MissingParameter(f"parameter {name!r} missing from store")
        if store[name].shape != shape:
            raise ShapeError(f"{name} has shape {store[name].shape}, expected {shape}")
    extra = set(store) - set(demanded)
    if extra:
        raise ConfigError(f"store has undemanded tensors: {sorted(extra)[:5]}")


def save_weights(store: WeightStore) -> bytes:
    """Serialize a store to weight-file bytes."""
    out = bytearray()
    out += WEIGHTS_MAGIC
    out.append(WEIGHTS_VERSION)
    profile = store.profile.encode("utf-8")
    out += struct.pack("<I", len(profile))
    out += profile
    out += struct.pack("<I", len(store))
    crc = 0
    for name, arr in store.items():
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise FormatError(f"tensor name too long: {len(nb)} bytes")
        if arr.ndim > 0xFF:
            raise FormatError(f"tensor rank too high: {arr.ndim}")
        out += struct.pack("<H", len(nb))
        out += nb
        out.append(arr.ndim)
        for d in arr.shape:
            out += struct.pack("<I", d)
        data = arr.astype("<f4").tobytes()
        crc = zlib.crc32(data, crc)
        out += data
    out += struct.pack("<I", crc & 0xFFFFFFFF)
    return bytes(out)


def write_weights(store: WeightStore, path) -> None:
    with open(path, "wb") as f:
        f.write(save_weights(store))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedStream(
                f"need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_weights(data: bytes) -> WeightStore:
    """Parse weight-file bytes; checksum and structure are enforced."""
    r = _Reader(data)
    if r.take(4) != WEIGHTS_MAGIC:
        raise BadMagic("not a weight file")
    version = r.u8()
    if version != WEIGHTS_VERSION:
        raise UnsupportedVersion(f"weight file version {version}, expected {WEIGHTS_VERSION}")
    profile = r.take(r.u32()).decode("utf-8")
    count = r.u32()
    store = WeightStore(profile=profile)
    crc = 0
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        ndim = r.u8()
        dims = tuple(r.u32() for _ in range(ndim))
        numel = int(np.prod(dims)) if dims else 1
        raw = r.take(4 * numel)
        crc = zlib.crc32(raw, crc)
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)
        store.put(name, arr)
    stored = r.u32()
    if stored != (crc & 0xFFFFFFFF):
        raise ChecksumMismatch(f"crc 0x{crc & 0xFFFFFFFF:08x} != stored 0x{stored:08x}")
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after checksum")
    return store


def read_weights(path) -> WeightStore:
    with open(path, "rb") as f:
        return load_weights(f.read())


def model_hash(store: WeightStore) -> int:
    """64-bit identity of (profile, weights), embedded in bitstreams."""
    payload = store.profile.encode("utf-8") + struct.pack("<I", store.checksum)
    return fnv1a64(payload)

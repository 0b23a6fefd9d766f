"""Gaussian-conditional entropy coding.

Latent residuals are quantized to a saturated integer alphabet [-63, 63] and
coded under discretized zero-mean Gaussians. Probabilities are frozen into
16-bit cumulative-frequency tables (total exactly 2^16, every symbol at least
1) so encoder and decoder share identical integer state; the range coder is
byte-oriented with a 64-bit low accumulator, a 32-bit range, and carry
propagation through a cached byte plus a pending-0xFF run. The flush appends
at most 8 bytes (5 plus one leading byte in practice).

Predicted scales snap to a 64-entry log-spaced table before table lookup, so
a scale only has to match on the table index, not in full precision, for both
ends to agree.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, DecodeError, ShapeError

SYMBOL_BOUND = 63
ALPHABET = 2 * SYMBOL_BOUND + 1
SIGMA_MIN = 0.11
SIGMA_MAX = 256.0
SCALE_LEVELS = 64
TOTAL_FREQ = 1 << 16

_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves away from zero.

    Outputs are integral floats with a positive zero, so a value and its
    decoded twin agree bitwise, not just numerically.
    """
    x64 = np.asarray(x, dtype=np.float64)
    return np.trunc(x64 + np.copysign(0.5, x64)) + 0.0


def quantize_mixed(values: np.ndarray, means: np.ndarray):
    """Quantize values relative to predicted means.

    symbol = round_half_away(value - mean) saturated to [-63, 63];
    reconstruction = symbol + mean in float32. Returns (symbols int32,
    reconstruction float32).
    """
    values = np.asarray(values, dtype=np.float32)
    means = np.asarray(means, dtype=np.float32)
    if values.shape != means.shape:
        raise ShapeError(f"values {values.shape} and means {means.shape} differ")
    symbols = round_half_away(values - means)
    symbols = np.clip(symbols, -SYMBOL_BOUND, SYMBOL_BOUND).astype(np.int32)
    recon = symbols.astype(np.float32) + means
    return symbols, recon


def gaussian_pmf(symbols, sigma: float) -> np.ndarray:
    """Mass of integer symbols under a discretized zero-mean Gaussian.

    Interior symbols integrate the density over [s-1/2, s+1/2]; the boundary
    symbols -63 and 63 absorb their open tails so the full alphabet sums
    to one.
    """
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    s = np.asarray(symbols, dtype=np.float64)
    upper = ndtr((s + 0.5) / sigma)
    lower = ndtr((s - 0.5) / sigma)
    mass = upper - lower
    mass = np.where(s <= -SYMBOL_BOUND, upper, mass)
    mass = np.where(s >= SYMBOL_BOUND, 1.0 - lower, mass)
    return mass


def full_pmf(sigma: float) -> np.ndarray:
    """pmf over the whole alphabet, index i maps to symbol i - 63."""
    return gaussian_pmf(np.arange(-SYMBOL_BOUND, SYMBOL_BOUND + 1), sigma)


@dataclass(frozen=True)
class CdfTable:
    """16-bit cumulative frequencies: cdf[0] = 0, cdf[-1] = 2^16, min freq 1."""

    cdf: np.ndarray

    def __post_init__(self) -> None:
        cdf = self.cdf
        if cdf.ndim != 1 or len(cdf) < 2:
            raise ConfigError(f"cdf must be 1-d with >= 2 entries, got {cdf.shape}")
        if cdf[0] != 0 or cdf[-1] != TOTAL_FREQ:
            raise ConfigError("cdf must span [0, 65536]")
        freqs = np.diff(cdf.astype(np.int64))
        if (freqs < 1).any():
            raise ConfigError("every symbol needs frequency >= 1")
        # plain python list: the per-symbol hot path avoids numpy scalars
        object.__setattr__(self, "_lst", [int(v) for v in cdf])

    @property
    def symbols(self) -> int:
        return len(self.cdf) - 1

    def freq(self, index: int) -> int:
        return self._lst[index + 1] - self._lst[index]


def build_cdf(pmf: np.ndarray) -> CdfTable:
    """Freeze a probability vector into 16-bit frequencies.

    Each symbol gets floor(p * (65536 - n)) + 1, then the shortfall is
    handed out by largest fractional remainder (ties to the lower index),
    cycling if a single pass is not enough.
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    n = len(pmf)
    if n < 2 or n >= TOTAL_FREQ:
        raise ConfigError(f"pmf length {n} unsupported")
    if (pmf < 0).any() or not np.isfinite(pmf).all():
        raise ConfigError("pmf must be finite and nonnegative")
    scaled = pmf * (TOTAL_FREQ - n)
    base = np.floor(scaled).astype(np.int64)
    freqs = base + 1
    shortfall = TOTAL_FREQ - int(freqs.sum())
    if shortfall < 0:
        raise ConfigError("pmf sums above one")
    if shortfall > 0:
        order = np.lexsort((np.arange(n), -(scaled - base)))
        for k in range(shortfall):
            freqs[order[k % n]] += 1
    cdf = np.zeros(n + 1, dtype=np.uint32)
    cdf[1:] = np.cumsum(freqs)
    return CdfTable(cdf=cdf)


class ScaleTable:
    """64 log-spaced scales from 0.11 to 256 with their frozen code tables."""

    def __init__(self, sigma_min: float = SIGMA_MIN, sigma_max: float = SIGMA_MAX,
                 levels: int = SCALE_LEVELS):
        if not 0 < sigma_min < sigma_max:
            raise ConfigError("need 0 < sigma_min < sigma_max")
        sigmas = np.exp(np.linspace(math.log(sigma_min), math.log(sigma_max), levels))
        sigmas[0] = sigma_min
        sigmas[-1] = sigma_max
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        self.sigmas = sigmas
        self.tables = tuple(build_cdf(full_pmf(float(s))) for s in sigmas)

    def index_for(self, sigma) -> np.ndarray:
        """Index of the smallest table scale >= clamped sigma."""
        clamped = np.clip(np.asarray(sigma, dtype=np.float64),
                          self.sigma_min, self.sigma_max)
        return np.searchsorted(self.sigmas, clamped, side="left").astype(np.int32)


@lru_cache(maxsize=1)
def default_scale_table() -> ScaleTable:
    return ScaleTable()


@dataclass(frozen=True)
class FactorizedModel:
    """Per-channel (mu, sigma) for coding the rounded hyper-latents."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise ShapeError(
                f"mu {self.mu.shape} and sigma {self.sigma.shape} must be equal 1-d")
        if (self.sigma <= 0).any():
            raise ConfigError("factorized sigmas must be positive")
        clamped = np.clip(self.sigma.astype(np.float64), SIGMA_MIN, SIGMA_MAX)
        object.__setattr__(self, "tables",
                           tuple(build_cdf(full_pmf(float(s))) for s in clamped))
        object.__setattr__(self, "offsets",
                           round_half_away(self.mu).astype(np.int32))

    @property
    def channels(self) -> int:
        return len(self.mu)


class RangeEncoder:
    """Byte-oriented range encoder (carry-less via cache + pending 0xFF run)."""

    def __init__(self):
        self._low = 0
        self._range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()
        self._done = False

    def encode(self, table: CdfTable, index: int) -> None:
        cdf = table._lst
        if not 0 <= index < len(cdf) - 1:
            raise ConfigError(f"symbol index {index} outside table of {len(cdf) - 1}")
        r = self._range >> 16
        self._low += r * cdf[index]
        self._range = r * (cdf[index + 1] - cdf[index])
        while self._range < _TOP:
            self._range = (self._range << 8) & _MASK32
            self._shift_low()

    def _shift_low(self) -> None:
        low = self._low
        if low < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            self._out.append((self._cache + carry) & 0xFF)
            self._out.extend(((0xFF + carry) & 0xFF,) * (self._cache_size - 1))
            self._cache_size = 0
            self._cache = (low >> 24) & 0xFF
        self._cache_size += 1
        self._low = (low << 8) & _MASK32

    def finish(self) -> bytes:
        if self._done:
            raise ConfigError("encoder already finished")
        self._done = True
        for _ in range(5):
            self._shift_low()
        return bytes(self._out)


class RangeDecoder:
    """Mirror of RangeEncoder; raises DecodeError when the stream runs dry."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self._range = _MASK32
        self._code = 0
        for _ in range(5):
            self._code = ((self._code << 8) | self._next_byte()) & _MASK32

    def _next_byte(self) -> int:
        if self._pos >= len(self._data):
            raise DecodeError(
                f"range stream exhausted at byte {self._pos} of {len(self._data)}")
        b = self._data[self._pos]
        self._pos += 1
        return b

    @property
    def consumed(self) -> int:
        return self._pos

    def decode_next(self, table: CdfTable) -> int:
        cdf = table._lst
        r = self._range >> 16
        target = self._code // r
        if target >= TOTAL_FREQ:
            target = TOTAL_FREQ - 1
        index = bisect_right(cdf, target) - 1
        self._code -= r * cdf[index]
        self._range = r * (cdf[index + 1] - cdf[index])
        while self._range < _TOP:
            self._code = ((self._code << 8) | self._next_byte()) & _MASK32
            self._range = (self._range << 8) & _MASK32
        return index


def encode_stream(indices, tables) -> bytes:
    """Code a whole symbol sequence; tables is one CdfTable or one per symbol."""
    enc = RangeEncoder()
    if isinstance(tables, CdfTable):
        for idx in indices:
            enc.encode(tables, int(idx))
    else:
        if len(indices) != len(tables):
            raise ShapeError(f"{len(indices)} symbols vs {len(tables)} tables")
        for idx, table in zip(indices, tables):
            enc.encode(table, int(idx))
    return enc.finish()


def decode_stream(data: bytes, tables, count: int | None = None) -> list[int]:
    """Inverse of encode_stream; count is required with a single shared table."""
    dec = RangeDecoder(data)
    if isinstance(tables, CdfTable):
        if count is None:
            raise ConfigError("count required with a shared table")
        return [dec.decode_next(tables) for _ in range(count)]
    return [dec.decode_next(t) for t in tables]


def estimate_rate(indices, tables) -> float:
    """Ideal code length in bits under the same frozen tables the coder uses."""
    if isinstance(tables, CdfTable):
        freqs = np.diff(tables.cdf.astype(np.float64))[np.asarray(indices, dtype=np.int64)]
        return float(-np.log2(freqs / TOTAL_FREQ).sum()) if len(freqs) else 0.0
    if len(indices) != len(tables):
        raise ShapeError(f"{len(indices)} symbols vs {len(tables)} tables")
    total = 0.0
    for idx, table in zip(indices, tables):
        total -= math.log2(table.freq(int(idx)) / TOTAL_FREQ)
    return total

"""Attention building blocks: neighborhood attention, residual blocks, stages.

Neighborhood attention scores each position against a w x w window of keys.
Windows are shifted, not shrunk, at borders: the window start clamps to
[0, dim - w], so every position sees exactly w*w in-bounds neighbors as long
as both spatial dims are at least w. Smaller maps fall back to attending over
the full image. A learned relative-position bias, indexed by the true offset
(key minus query) per axis, is added to the raw scores before the 1/sqrt(d)
scaling; in the fallback regime offsets beyond the table saturate to its rim.

The residual block wraps attention and a 2x-expansion MLP with pre-layernorm
and identity residuals over the token matrix. A stage pairs a stride-2
resampler with a stack of residual blocks: conv first on the analysis side,
blocks first with a transposed conv after on the synthesis side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import (
    ConvKernel,
    check_chw,
    conv2d,
    from_tokens,
    gelu,
    layer_norm,
    linear,
    softmax,
    tconv2d,
    to_tokens,
)

_BLOCK_POSITIONS = 4096


@dataclass(frozen=True)
class NaParams:
    """Projections and bias table for one neighborhood-attention layer.

    wq/wk/wv/wo are (C, C) with C = heads * head_dim; bias_table is
    (heads, 2w-1, 2w-1), one entry per head and reachable offset.
    """

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bias_table: np.ndarray
    window: int

    def __post_init__(self) -> None:
        c = self.wq.shape[0]
        for name in ("wq", "wk", "wv", "wo"):
            m = getattr(self, name)
            if m.shape != (c, c) or m.dtype != np.float32:
                raise ShapeError(f"{name} must be float32 ({c}, {c}), got {m.shape} {m.dtype}")
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"window must be odd and positive, got {self.window}")
        span = 2 * self.window - 1
        if self.bias_table.ndim != 3 or self.bias_table.shape[1:] != (span, span):
            raise ShapeError(
                f"bias_table must be (heads, {span}, {span}), got {self.bias_table.shape}")
        if c % self.bias_table.shape[0] != 0:
            raise ShapeError(
                f"heads {self.bias_table.shape[0]} must divide channels {c}")

    @property
    def heads(self) -> int:
        return self.bias_table.shape[0]

    @property
    def channels(self) -> int:
        return self.wq.shape[0]


def _attend(q64: np.ndarray, kg: np.ndarray, vg: np.ndarray,
            bias: np.ndarray, scale: float) -> np.ndarray:
    """softmax((q.k + bias) * scale) . v for one head over gathered neighbors.

    q64 (P, d), kg/vg (P, N, d), bias (P, N) -> (P, d), all float64.
    """
    scores = (np.einsum("pd,pnd->pn", q64, kg, optimize=True) + bias) * scale
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    attn = e / e.sum(axis=1, keepdims=True)
    return np.einsum("pn,pnd->pd", attn, vg, optimize=True)


def neighborhood_attention(x: np.ndarray, p: NaParams) -> np.ndarray:
    """Windowed multi-head attention over a (C, H, W) map."""
    x = check_chw(x, "attention input")
    c, h, w_dim = x.shape
    if c != p.channels:
        raise ShapeError(f"attention input has {c} channels, params expect {p.channels}")
    heads = p.heads
    d = c // heads
    scale = 1.0 / np.sqrt(d)
    win = p.window

    t = to_tokens(x)
    q = linear(t, p.wq).astype(np.float64)
    k = linear(t, p.wk).astype(np.float64)
    v = linear(t, p.wv).astype(np.float64)
    table = p.bias_table.astype(np.float64)
    out = np.empty((h * w_dim, c), dtype=np.float64)

    if min(h, w_dim) >= win:
        half = win // 2
        starts_r = np.clip(np.arange(h) - half, 0, h - win)
        starts_c = np.clip(np.arange(w_dim) - half, 0, w_dim - win)
        nbr_r = starts_r[:, None] + np.arange(win)[None, :]          # (H, win)
        nbr_c = starts_c[:, None] + np.arange(win)[None, :]          # (W, win)
        bias_r = nbr_r - np.arange(h)[:, None] + (win - 1)           # true row offsets
        bias_c = nbr_c - np.arange(w_dim)[:, None] + (win - 1)
        flat = (nbr_r[:, None, :, None] * w_dim + nbr_c[None, :, None, :])
        flat = flat.reshape(h, w_dim, win * win)

        rows_per_block = max(1, _BLOCK_POSITIONS // w_dim)
        for r0 in range(0, h, rows_per_block):
            r1 = min(h, r0 + rows_per_block)
            ni = flat[r0:r1].reshape(-1, win * win)
            sel_r = bias_r[r0:r1]
            for head in range(heads):
                lo, hi = head * d, (head + 1) * d
                bias = table[head][sel_r[:, None, :, None], bias_c[None, :, None, :]]
                bias = bias.reshape(-1, win * win)
                out[r0 * w_dim:r1 * w_dim, lo:hi] = _attend(
                    q[r0 * w_dim:r1 * w_dim, lo:hi], k[ni, lo:hi], v[ni, lo:hi],
                    bias, scale)
    else:
        # whole image as neighborhood; offsets saturate into the table
        total = h * w_dim
        pos_r = np.repeat(np.arange(h), w_dim)
        pos_c = np.tile(np.arange(w_dim), h)
        for p0 in range(0, total, _BLOCK_POSITIONS):
            p1 = min(total, p0 + _BLOCK_POSITIONS)
            dr = np.clip(pos_r[None, :] - pos_r[p0:p1, None], 1 - win, win - 1) + win - 1
            dc = np.clip(pos_c[None, :] - pos_c[p0:p1, None], 1 - win, win - 1) + win - 1
            for head in range(heads):
                lo, hi = head * d, (head + 1) * d
                bias = table[head][dr, dc]
                kg = np.broadcast_to(k[None, :, lo:hi], (p1 - p0, total, d))
                vg = np.broadcast_to(v[None, :, lo:hi], (p1 - p0, total, d))
                out[p0:p1, lo:hi] = _attend(q[p0:p1, lo:hi], kg, vg, bias, scale)

    return from_tokens(linear(out.astype(np.float32), p.wo), h, w_dim)


@dataclass(frozen=True)
class RnabParams:
    """One residual neighborhood-attention block: LN -> NA, LN -> 2x MLP."""

    ln1_weight: np.ndarray
    ln1_bias: np.ndarray
    na: NaParams
    ln2_weight: np.ndarray
    ln2_bias: np.ndarray
    fc1_weight: np.ndarray
    fc1_bias: np.ndarray
    fc2_weight: np.ndarray
    fc2_bias: np.ndarray

    def __post_init__(self) -> None:
        c = self.na.channels
        if self.fc1_weight.shape != (2 * c, c):
            raise ShapeError(f"fc1 must be ({2 * c}, {c}), got {self.fc1_weight.shape}")
        if self.fc2_weight.shape != (c, 2 * c):
            raise ShapeError(f"fc2 must be ({c}, {2 * c}), got {self.fc2_weight.shape}")

    @property
    def channels(self) -> int:
        return self.na.channels


def rnab_forward(x: np.ndarray, p: RnabParams) -> np.ndarray:
    """x + NA(LN1(x)), then + MLP(LN2(.)), channels and dims preserved."""
    x = check_chw(x, "block input")
    if x.shape[0] != p.channels:
        raise ShapeError(f"block input has {x.shape[0]} channels, params expect {p.channels}")
    _, h, w = x.shape
    t = to_tokens(x)
    a = layer_norm(t, p.ln1_weight, p.ln1_bias)
    t = t + to_tokens(neighborhood_attention(from_tokens(a, h, w), p.na))
    m = layer_norm(t, p.ln2_weight, p.ln2_bias)
    m = linear(gelu(linear(m, p.fc1_weight, p.fc1_bias)), p.fc2_weight, p.fc2_bias)
    t = t + m
    return from_tokens(t, h, w)


@dataclass(frozen=True)
class IcsaParams:
    """One stage: a stride-2 resampling conv plus a stack of residual blocks."""

    conv: ConvKernel
    blocks: tuple[RnabParams, ...]


def icsa_forward(x: np.ndarray, p: IcsaParams, mode: str) -> np.ndarray:
    """Run one stage: 'analysis' is conv then blocks, 'synthesis' is blocks then tconv."""
    if mode == "analysis":
        y = conv2d(x, p.conv)
        for blk in p.blocks:
            y = rnab_forward(y, blk)
        return y
    if mode == "synthesis":
        y = x
        for blk in p.blocks:
            y = rnab_forward(y, blk)
        return tconv2d(y, p.conv)
    raise ConfigError(f"mode must be 'analysis' or 'synthesis', got {mode!r}")

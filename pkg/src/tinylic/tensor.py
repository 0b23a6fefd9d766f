"""Single-image tensor kernels.

A feature map is a C-contiguous numpy float32 array of shape (channels,
height, width); token matrices are (tokens, channels). All reductions
(convolutions, linear maps, normalization statistics) accumulate in float64
and store results back as float32, so repeated application drifts by rounding
only. Every op is a pure function of its arguments: no global state, no RNG.

Convolutions use zero padding of (k-1)/2 on each side, so stride 1 preserves
spatial dims and stride 2 exactly halves even dims. Transposed convolutions
use output_padding 1 at stride 2, which makes them the shape inverse of the
matching stride-2 convolution on even dims.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ShapeError

_SUPPORTED_KERNELS = (1, 3, 5)
_SUPPORTED_STRIDES = (1, 2)

LAYER_NORM_EPS = 1e-6


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


def check_chw(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Validate a (C, H, W) float32 map and return it C-contiguous."""
    _require(isinstance(x, np.ndarray), f"{name} must be a numpy array")
    _require(x.ndim == 3, f"{name} must have shape (C, H, W), got {x.shape}")
    _require(x.dtype == np.float32, f"{name} must be float32, got {x.dtype}")
    _require(all(d >= 1 for d in x.shape), f"{name} has empty dims: {x.shape}")
    return np.ascontiguousarray(x)


def _check_finite(x: np.ndarray, name: str) -> np.ndarray:
    if not np.isfinite(x).all():
        raise ShapeError(f"{name} produced non-finite values")
    return x


@dataclass(frozen=True)
class ConvKernel:
    """Weights for one (transposed) convolution.

    weight is (out_channels, in_channels, k, k) with k square and odd; bias
    is (out_channels,). The same record serves conv2d and tconv2d; which op
    it feeds decides the direction.
    """

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1

    def __post_init__(self) -> None:
        _require(self.weight.ndim == 4, f"kernel weight must be 4-d, got {self.weight.shape}")
        _require(self.weight.dtype == np.float32, "kernel weight must be float32")
        out_ch, _, kh, kw = self.weight.shape
        _require(kh == kw, f"kernel must be square, got {kh}x{kw}")
        _require(kh in _SUPPORTED_KERNELS, f"kernel size {kh} not in {_SUPPORTED_KERNELS}")
        _require(self.stride in _SUPPORTED_STRIDES, f"stride {self.stride} not in {_SUPPORTED_STRIDES}")
        _require(self.bias.shape == (out_ch,), f"bias shape {self.bias.shape} != ({out_ch},)")
        _require(self.bias.dtype == np.float32, "kernel bias must be float32")

    @property
    def size(self) -> int:
        return self.weight.shape[2]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]


def conv2d(x: np.ndarray, kernel: ConvKernel) -> np.ndarray:
    """Cross-correlate x (Cin, H, W) -> (Cout, H', W') with zero padding (k-1)/2.

    H' = floor((H + 2p - k)/stride) + 1, which is H at stride 1 and H/2 at
    stride 2 on even H.
    """
    x = check_chw(x, "conv input")
    k = kernel.size
    s = kernel.stride
    pad = (k - 1) // 2
    cin, h, w = x.shape
    _require(cin == kernel.in_channels,
             f"conv input has {cin} channels, kernel expects {kernel.in_channels}")
    ho = (h + 2 * pad - k) // s + 1
    wo = (w + 2 * pad - k) // s + 1
    _require(ho >= 1 and wo >= 1, f"conv output would be empty for input {h}x{w}")

    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))).astype(np.float64)
    w64 = kernel.weight.astype(np.float64)
    acc = np.zeros((kernel.out_channels, ho, wo), dtype=np.float64)
    for kh in range(k):
        for kw in range(k):
            patch = xp[:, kh:kh + s * (ho - 1) + 1:s, kw:kw + s * (wo - 1) + 1:s]
            acc += np.tensordot(w64[:, :, kh, kw], patch, axes=(1, 0))
    acc += kernel.bias.astype(np.float64)[:, None, None]
    return _check_finite(acc.astype(np.float32), "conv2d")


def tconv2d(x: np.ndarray, kernel: ConvKernel) -> np.ndarray:
    """Transposed convolution, the upsampling adjoint of conv2d.

    Output dims are stride * input dims: output_padding is fixed to 1 at
    stride 2 (inverting the stride-2 conv shape map on even dims) and 0 at
    stride 1. Kernel weight stays (out_channels, in_channels, k, k).
    """
    x = check_chw(x, "tconv input")
    k = kernel.size
    s = kernel.stride
    pad = (k - 1) // 2
    cin, h, w = x.shape
    _require(cin == kernel.in_channels,
             f"tconv input has {cin} channels, kernel expects {kernel.in_channels}")
    ho, wo = s * h, s * w

    x64 = x.astype(np.float64)
    w64 = kernel.weight.astype(np.float64)
    acc = np.zeros((kernel.out_channels, ho, wo), dtype=np.float64)
    for kh in range(k):
        dr = kh - pad
        # rows: target a = s*h + dr must land in [0, ho)
        h0 = (-dr + s - 1) // s if dr < 0 else 0
        h1 = min(h, (ho - 1 - dr) // s + 1)
        if h0 >= h1:
            continue
        for kw in range(k):
            dc = kw - pad
            w0 = (-dc + s - 1) // s if dc < 0 else 0
            w1 = min(w, (wo - 1 - dc) // s + 1)
            if w0 >= w1:
                continue
            contrib = np.tensordot(w64[:, :, kh, kw], x64[:, h0:h1, w0:w1], axes=(1, 0))
            acc[:, s * h0 + dr:s * (h1 - 1) + dr + 1:s,
                s * w0 + dc:s * (w1 - 1) + dc + 1:s] += contrib
    acc += kernel.bias.astype(np.float64)[:, None, None]
    return _check_finite(acc.astype(np.float32), "tconv2d")


def to_tokens(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (H*W, C) token matrix, positions in row-major order."""
    x = check_chw(x, "to_tokens input")
    c = x.shape[0]
    return np.ascontiguousarray(x.reshape(c, -1).T)


def from_tokens(t: np.ndarray, height: int, width: int) -> np.ndarray:
    """(H*W, C) token matrix back to (C, H, W)."""
    _require(t.ndim == 2, f"token matrix must be 2-d, got {t.shape}")
    _require(t.shape[0] == height * width,
             f"token count {t.shape[0]} != {height}*{width}")
    return np.ascontiguousarray(t.T.reshape(t.shape[1], height, width))


def layer_norm(t: np.ndarray, weight: np.ndarray, bias: np.ndarray,
               eps: float = LAYER_NORM_EPS) -> np.ndarray:
    """Per-token normalization over channels: (t - mean)/sqrt(var + eps) * w + b.

    Population variance; constant rows come out all zero (times weight, plus
    bias) thanks to eps.
    """
    _require(t.ndim == 2, f"layer_norm input must be (T, C), got {t.shape}")
    c = t.shape[1]
    _require(weight.shape == (c,) and bias.shape == (c,),
             f"layer_norm params must be ({c},), got {weight.shape}/{bias.shape}")
    t64 = t.astype(np.float64)
    mean = t64.mean(axis=1, keepdims=True)
    var = t64.var(axis=1, keepdims=True)
    out = (t64 - mean) / np.sqrt(var + eps)
    out = out * weight.astype(np.float64) + bias.astype(np.float64)
    return _check_finite(out.astype(np.float32), "layer_norm")


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact-erf GELU: x * 0.5 * (1 + erf(x / sqrt(2)))."""
    x64 = np.asarray(x, dtype=np.float64)
    out = x64 * 0.5 * (1.0 + erf(x64 / np.sqrt(2.0)))
    return _check_finite(out.astype(np.float32), "gelu")


def linear(t: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Token-wise affine map: (T, Cin) @ weight.T + bias with weight (Cout, Cin)."""
    _require(t.ndim == 2, f"linear input must be (T, C), got {t.shape}")
    _require(weight.ndim == 2, f"linear weight must be 2-d, got {weight.shape}")
    _require(t.shape[1] == weight.shape[1],
             f"linear input width {t.shape[1]} != weight fan-in {weight.shape[1]}")
    out = t.astype(np.float64) @ weight.astype(np.float64).T
    if bias is not None:
        _require(bias.shape == (weight.shape[0],),
                 f"linear bias shape {bias.shape} != ({weight.shape[0]},)")
        out += bias.astype(np.float64)
    return _check_finite(out.astype(np.float32), "linear")


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax along one axis; rows are nonnegative and sum to 1."""
    x64 = np.asarray(x, dtype=np.float64)
    shifted = x64 - x64.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return _check_finite(out.astype(np.float32), "softmax")

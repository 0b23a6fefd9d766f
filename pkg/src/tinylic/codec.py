"""End-to-end image codec: pipeline, image buffers, and quality metrics.

Encoding pads the image to multiples of 64 by edge replication (original
dims travel in the header), runs the main and hyper analysis transforms,
codes the rounded hyper-latents under the factorized per-channel model, and
codes the main latents with the multistage context model conditioned on the
synthesized prior. Decoding reverses all of it and crops back; a stage
prefix can be requested for a coarse, cheaper reconstruction.

Rate-distortion trade-off points come from a fixed 8-entry lambda grid;
the cost functional is J = bpp + lambda * MSE with MSE in the unit domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .coder import (
    SYMBOL_BOUND,
    FactorizedModel,
    RangeDecoder,
    encode_stream,
    estimate_rate,
    round_half_away,
)
from .container import (
    Container,
    read_container,
    write_container,
)
from .errors import FormatError, MinSizeError, ModelMismatch, ShapeError
from .mcm import (
    GROUP_COUNT,
    McmModel,
    SliceSpec,
    mcm_decode,
    mcm_encode,
    progressive_decode,
)
from .transform import (
    DOWNSAMPLE_HYPER,
    DOWNSAMPLE_MAIN,
    PAD_MULTIPLE,
    NetworkConfig,
    TransformModel,
    analysis_hyper,
    analysis_main,
    synthesis_hyper,
    synthesis_main,
)
from .weights import WeightStore, check_complete, model_hash

LAMBDA_GRID = (0.0018, 0.0035, 0.0067, 0.013, 0.025, 0.0483, 0.0932, 0.18)

MS_SSIM_MIN_DIM = 176
_MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


@dataclass(frozen=True)
class ImageBuffer:
    """8-bit RGB raster, (height, width, 3) uint8, rows top to bottom."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ShapeError(f"pixels must be (H, W, 3) uint8, got {p.shape} {p.dtype}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ShapeError("image must be nonempty")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def to_unit_tensor(img: ImageBuffer) -> np.ndarray:
    """(H, W, 3) uint8 -> (3, H, W) float32 in [0, 1]."""
    return np.ascontiguousarray(
        img.pixels.astype(np.float32).transpose(2, 0, 1) / 255.0)


def from_unit_tensor(t: np.ndarray) -> ImageBuffer:
    """(3, H, W) floats -> uint8 image; clamp, then round half up."""
    if t.ndim != 3 or t.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W), got {t.shape}")
    scaled = np.clip(t.astype(np.float64), 0.0, 1.0) * 255.0
    return ImageBuffer(pixels=np.floor(scaled + 0.5).astype(np.uint8).transpose(1, 2, 0))


def pad_to_multiple(t: np.ndarray, multiple: int = PAD_MULTIPLE) -> np.ndarray:
    """Edge-replicate on the bottom/right up to the next multiple."""
    _, h, w = t.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return t
    return np.pad(t, ((0, 0), (0, ph), (0, pw)), mode="edge")


# ---------------------------------------------------------------- PPM I/O

def parse_ppm(data: bytes) -> ImageBuffer:
    """Binary P6, maxval 255."""
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while True:
            while pos < len(data) and data[pos:pos + 1].isspace():
                pos += 1
            if pos < len(data) and data[pos:pos + 1] == b"#":
                while pos < len(data) and data[pos] != 0x0A:
                    pos += 1
                continue
            break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("unexpected end of PPM header")
        return data[start:pos]

    if token() != b"P6":
        raise FormatError("not a binary PPM (P6) file")
    try:
        width = int(token())
        height = int(token())
        maxval = int(token())
    except ValueError as e:
        raise FormatError(f"bad PPM header field: {e}") from None
    if maxval != 255:
        raise FormatError(f"only maxval 255 supported, got {maxval}")
    if width < 1 or height < 1:
        raise FormatError(f"bad PPM dims {width}x{height}")
    pos += 1  # single whitespace after maxval
    need = width * height * 3
    raw = data[pos:pos + need]
    if len(raw) < need:
        raise FormatError(f"PPM payload needs {need} bytes, has {len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return ImageBuffer(pixels=pixels.copy())


def serialize_ppm(img: ImageBuffer) -> bytes:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def read_ppm(path) -> ImageBuffer:
    with open(path, "rb") as f:
        return parse_ppm(f.read())


def write_ppm(img: ImageBuffer, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize_ppm(img))


# ---------------------------------------------------------------- metrics

def mse_unit(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean squared error in the [0, 1] domain, pooled over RGB."""
    if a.pixels.shape != b.pixels.shape:
        raise ShapeError(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    d = a.pixels.astype(np.float64) / 255.0 - b.pixels.astype(np.float64) / 255.0
    return float((d * d).mean())


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """10*log10(255^2 / MSE) over 8-bit samples; +inf for identical images."""
    if a.pixels.shape != b.pixels.shape:
        raise ShapeError(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    d = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float((d * d).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _blur_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    v = sliding_window_view(x, len(g), axis=0) @ g
    return sliding_window_view(v, len(g), axis=1) @ g


def _ssim_parts(a: np.ndarray, b: np.ndarray, g: np.ndarray):
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    mu1 = _blur_valid(a, g)
    mu2 = _blur_valid(b, g)
    s11 = _blur_valid(a * a, g) - mu1 * mu1
    s22 = _blur_valid(b * b, g) - mu2 * mu2
    s12 = _blur_valid(a * b, g) - mu1 * mu2
    lum = (2 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1)
    cs = (2 * s12 + c2) / (s11 + s22 + c2)
    return float(lum.mean()), max(float(cs.mean()), 0.0)


def _halve(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    x = x[: h - h % 2, : w - w % 2]
    return (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2]) / 4.0


def ms_ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Five-scale structural similarity, averaged over RGB planes.

    Needs at least 176 pixels on each side so the 11-tap window survives
    four halvings; smaller inputs raise MinSizeError.
    """
    if a.pixels.shape != b.pixels.shape:
        raise ShapeError(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    if min(a.height, a.width) < MS_SSIM_MIN_DIM:
        raise MinSizeError(
            f"ms-ssim needs at least {MS_SSIM_MIN_DIM} px per side, "
            f"got {a.width}x{a.height}")
    g = _gaussian_window()
    scores = []
    for ch in range(3):
        p = a.pixels[:, :, ch].astype(np.float64)
        q = b.pixels[:, :, ch].astype(np.float64)
        acc = 1.0
        for level, weight in enumerate(_MS_SSIM_WEIGHTS):
            lum, cs = _ssim_parts(p, q, g)
            if level < len(_MS_SSIM_WEIGHTS) - 1:
                acc *= cs ** weight
                p = _halve(p)
                q = _halve(q)
            else:
                acc *= (max(lum, 0.0) * cs) ** weight
        scores.append(acc)
    return float(np.mean(scores))


def j_cost(bpp: float, mse: float, lambda_index: int) -> float:
    """Rate-distortion objective J = bpp + lambda * MSE (unit-domain MSE)."""
    if not 0 <= lambda_index < len(LAMBDA_GRID):
        raise FormatError(f"lambda_index {lambda_index} outside the grid")
    return bpp + LAMBDA_GRID[lambda_index] * mse


@dataclass(frozen=True)
class RdReport:
    bpp: float
    psnr: float
    ms_ssim: float | None
    j: float | None


# ---------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class Codec:
    """Everything needed to run both directions for one weight set."""

    store: WeightStore
    config: NetworkConfig
    transforms: TransformModel
    mcm: McmModel
    factorized: FactorizedModel
    identity: int

    @classmethod
    def from_store(cls, store: WeightStore) -> "Codec":
        cfg = store.config
        check_complete(store, cfg)
        return cls(
            store=store,
            config=cfg,
            transforms=TransformModel.from_store(store, cfg),
            mcm=McmModel.from_store(store, cfg),
            factorized=FactorizedModel(mu=store["fm.mu"], sigma=store["fm.sigma"]),
            identity=model_hash(store),
        )


def _hyper_streams(zhat: np.ndarray, fm: FactorizedModel):
    """Channel-major, then row-major symbol order for the hyper-latents."""
    symbols = []
    tables = []
    for c in range(zhat.shape[0]):
        rel = np.clip(zhat[c].astype(np.int64) - int(fm.offsets[c]),
                      -SYMBOL_BOUND, SYMBOL_BOUND).ravel()
        symbols.extend(int(s) + SYMBOL_BOUND for s in rel)
        tables.extend([fm.tables[c]] * rel.size)
    return symbols, tables


def encode_image(img: ImageBuffer, codec: Codec, lambda_index: int = 0,
                 rate_info: dict | None = None) -> bytes:
    """Produce a container; byte-identical for identical inputs."""
    t = pad_to_multiple(to_unit_tensor(img))
    y = analysis_main(t, codec.transforms)
    z = analysis_hyper(y, codec.transforms)
    zhat = round_half_away(z).astype(np.float32)

    symbols, tables = _hyper_streams(zhat, codec.factorized)
    hyper_seg = encode_stream(symbols, tables)
    if rate_info is not None:
        rate_info["hyper"] = (len(hyper_seg), estimate_rate(symbols, tables))

    prior = synthesis_hyper(zhat, codec.transforms)
    stage_rates: list = []
    stage_segs, _ = mcm_encode(y, prior, codec.mcm, rate_info=stage_rates)
    if rate_info is not None:
        for i, pair in enumerate(stage_rates):
            rate_info[f"stage{i + 1}"] = pair

    container = Container(
        width=img.width, height=img.height, lambda_index=lambda_index,
        model_hash=codec.identity, group_sizes=tuple(codec.mcm.spec.sizes),
        segments=(hyper_seg, *stage_segs),
    )
    return write_container(container)


def _decode_hyper(segment: bytes, fm: FactorizedModel, zh: int, zw: int) -> np.ndarray:
    dec = RangeDecoder(segment)
    zhat = np.empty((fm.channels, zh, zw), dtype=np.float32)
    for c in range(fm.channels):
        table = fm.tables[c]
        off = int(fm.offsets[c])
        plane = np.empty(zh * zw, dtype=np.float32)
        for i in range(zh * zw):
            plane[i] = dec.decode_next(table) - SYMBOL_BOUND + off
        zhat[c] = plane.reshape(zh, zw)
    return zhat


def decode_image(data: bytes, codec: Codec, stages: int | None = None,
                 stats: dict | None = None) -> ImageBuffer:
    """Reconstruct an image; stages < 4 decodes only that group prefix."""
    c = read_container(data)
    if c.model_hash != codec.identity:
        raise ModelMismatch(
            f"container model {c.model_hash:016x} != loaded {codec.identity:016x}")
    if tuple(c.group_sizes) != tuple(codec.mcm.spec.sizes):
        raise ModelMismatch(
            f"container groups {c.group_sizes} != model {codec.mcm.spec.sizes}")
    if stages is None:
        stages = GROUP_COUNT
    if not 1 <= stages <= GROUP_COUNT:
        raise FormatError(f"stages must be 1..{GROUP_COUNT}, got {stages}")

    ph = -(-c.height // PAD_MULTIPLE) * PAD_MULTIPLE
    pw = -(-c.width // PAD_MULTIPLE) * PAD_MULTIPLE
    total_down = DOWNSAMPLE_MAIN * DOWNSAMPLE_HYPER
    zh, zw = ph // total_down, pw // total_down
    zhat = _decode_hyper(c.segments[0], codec.factorized, zh, zw)
    prior = synthesis_hyper(zhat, codec.transforms)
    if stages == GROUP_COUNT:
        y_hat = mcm_decode(list(c.segments[1:]), prior, codec.mcm, stats=stats)
    else:
        y_hat = progressive_decode(list(c.segments[1:1 + stages]), prior,
                                   codec.mcm, stats=stats)
    x = synthesis_main(y_hat, codec.transforms)
    return from_unit_tensor(x[:, :c.height, :c.width])


def report(ref: ImageBuffer, test: ImageBuffer, container: bytes | None = None,
           lambda_index: int | None = None) -> RdReport:
    """Distortion metrics, plus rate and J when a container is supplied."""
    value_psnr = psnr(ref, test)
    try:
        value_ms = ms_ssim(ref, test)
    except MinSizeError:
        value_ms = None
    bpp = float("nan")
    j = None
    if container is not None:
        parsed = read_container(container)
        bpp = parsed.bpp()
        if lambda_index is None:
            lambda_index = parsed.lambda_index
        j = j_cost(bpp, mse_unit(ref, test), lambda_index)
    return RdReport(bpp=bpp, psnr=value_psnr, ms_ssim=value_ms, j=j)

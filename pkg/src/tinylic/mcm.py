"""Multistage context model over the main latents.

Channels split into four groups (cosine schedule by default: later groups are
wider). Groups code sequentially; inside a group, positions code over a fixed
spatial schedule of 4, 2, 2, and 1 steps:

  stage 1: 2x2 tiling, step order (0,0), (1,1), (0,1), (1,0)
  stage 2: checkerboard, step 0 where (row + col) is even
  stage 3: checkerboard with the parities swapped
  stage 4: everything at once

so a full decode always runs 4 + 2 + 2 + 1 = 9 sequential passes.

Each stage predicts (mu, sigma) per position from three context paths: the
entropy prior, a channel context over all fully decoded earlier groups, and
(stages 1-3) a spatial context over the in-progress group with not-yet-coded
positions zeroed by an availability mask. The encoder steps through the same
availability states the decoder will see, so both paths compute bit-identical
parameters; that, not speed, is what the mask-multiply formulation buys.

Decoding a prefix of the groups is valid: missing groups are filled with the
predicted mean under an all-zero availability mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coder import (
    SIGMA_MAX,
    SIGMA_MIN,
    SYMBOL_BOUND,
    RangeDecoder,
    ScaleTable,
    default_scale_table,
    encode_stream,
    estimate_rate,
    quantize_mixed,
)
from .errors import ConfigError, DecodeError, ShapeError
from .tensor import ConvKernel, check_chw, conv2d, gelu
from .transform import NetworkConfig

GROUP_COUNT = 4
STAGE_STEPS = (4, 2, 2, 1)
TOTAL_PASSES = sum(STAGE_STEPS)


@dataclass(frozen=True)
class SliceSpec:
    """Contiguous channel group sizes; offsets are prefix sums."""

    sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.sizes) != GROUP_COUNT:
            raise ConfigError(f"expected {GROUP_COUNT} groups, got {len(self.sizes)}")
        if any(s < 1 for s in self.sizes):
            raise ConfigError(f"every group needs >= 1 channel, got {self.sizes}")

    @property
    def channels(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        out = [0]
        for s in self.sizes[:-1]:
            out.append(out[-1] + s)
        return tuple(out)


def cosine_slice(channels: int, groups: int = GROUP_COUNT) -> SliceSpec:
    """Cosine-curve split: cum_i = floor(C * (1 - cos(pi*i/(2K)))).

    Group sizes grow toward the later groups; needs enough channels for every
    group to be nonempty (16 is always safe at 4 groups).
    """
    if channels < 16:
        raise ConfigError(f"cosine slicing needs >= 16 channels, got {channels}")
    cums = [int(math.floor(channels * (1.0 - math.cos(math.pi * i / (2 * groups)))))
            for i in range(1, groups)]
    cums.append(channels)
    sizes = [cums[0]] + [cums[i] - cums[i - 1] for i in range(1, groups)]
    if any(s < 1 for s in sizes):
        raise ConfigError(f"cosine slicing degenerate for {channels} channels: {sizes}")
    if any(sizes[i] > sizes[i + 1] for i in range(groups - 1)):
        raise ConfigError(f"cosine slice sizes must be nondecreasing, got {sizes}")
    return SliceSpec(sizes=tuple(sizes))


def linear_slice(channels: int, groups: int = GROUP_COUNT) -> SliceSpec:
    """Near-equal split; the remainder goes to the last groups."""
    if channels < groups:
        raise ConfigError(f"need >= {groups} channels, got {channels}")
    base, rem = divmod(channels, groups)
    sizes = [base] * (groups - rem) + [base + 1] * rem
    return SliceSpec(sizes=tuple(sizes))


def gcp_masks(height: int, width: int, steps: int,
              complementary: bool = False) -> tuple[np.ndarray, ...]:
    """Boolean step masks partitioning an even-dim grid.

    steps=4 is the 2x2 tiling in order (0,0), (1,1), (0,1), (1,0); steps=2 is
    the checkerboard with step 0 on even (row+col) parity, swapped when
    complementary; steps=1 is everything.
    """
    if steps == 1:
        if complementary:
            raise ConfigError("complementary only applies to 2-step schedules")
        return (np.ones((height, width), dtype=bool),)
    if steps not in (2, 4):
        raise ConfigError(f"steps must be 1, 2 or 4, got {steps}")
    if height % 2 or width % 2:
        raise ConfigError(f"grid {height}x{width} must have even dims")
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    if steps == 4:
        if complementary:
            raise ConfigError("complementary only applies to 2-step schedules")
        order = ((0, 0), (1, 1), (0, 1), (1, 0))
        return tuple((rows % 2 == dr) & (cols % 2 == dc) for dr, dc in order)
    even = (rows + cols) % 2 == 0
    first = ~even if complementary else even
    return (first, ~first)


@dataclass(frozen=True)
class GcpSchedule:
    """Per-stage step masks for one latent grid."""

    height: int
    width: int
    stage_masks: tuple[tuple[np.ndarray, ...], ...]

    @property
    def total_passes(self) -> int:
        return sum(len(m) for m in self.stage_masks)


def build_schedule(height: int, width: int) -> GcpSchedule:
    return GcpSchedule(
        height=height, width=width,
        stage_masks=(
            gcp_masks(height, width, 4),
            gcp_masks(height, width, 2, complementary=False),
            gcp_masks(height, width, 2, complementary=True),
            gcp_masks(height, width, 1),
        ))


def mcm_parameter_shapes(latent_channels: int, prior_channels: int,
                         spec: SliceSpec) -> dict[str, tuple]:
    """Canonical context-net parameter names with demanded shapes."""
    if spec.channels != latent_channels:
        raise ConfigError(f"slice covers {spec.channels} channels, "
                          f"latents have {latent_channels}")
    shapes: dict[str, tuple] = {}
    for i, n in enumerate(spec.sizes):
        stage = f"mcm.stage{i + 1}"
        cum = spec.offsets[i]
        wide = 2 * n
        shapes[f"{stage}.cc.conv1.weight"] = (wide, prior_channels + cum, 5, 5)
        shapes[f"{stage}.cc.conv1.bias"] = (wide,)
        shapes[f"{stage}.cc.conv2.weight"] = (wide, wide, 5, 5)
        shapes[f"{stage}.cc.conv2.bias"] = (wide,)
        has_sc = i < GROUP_COUNT - 1
        if has_sc:
            shapes[f"{stage}.sc.conv.weight"] = (wide, n, 3, 3)
            shapes[f"{stage}.sc.conv.bias"] = (wide,)
        ep_in = prior_channels + wide + (wide if has_sc else 0)
        shapes[f"{stage}.ep.conv1.weight"] = (wide, ep_in, 1, 1)
        shapes[f"{stage}.ep.conv1.bias"] = (wide,)
        shapes[f"{stage}.ep.conv2.weight"] = (wide, wide, 1, 1)
        shapes[f"{stage}.ep.conv2.bias"] = (wide,)
        shapes[f"{stage}.ep.conv3.weight"] = (wide, wide, 1, 1)
        shapes[f"{stage}.ep.conv3.bias"] = (wide,)
    return shapes


@dataclass(frozen=True)
class StageNets:
    """Context nets for one group: channel path, spatial path, parameter head."""

    cc1: ConvKernel
    cc2: ConvKernel
    sc: ConvKernel | None
    ep1: ConvKernel
    ep2: ConvKernel
    ep3: ConvKernel


@dataclass(frozen=True)
class McmModel:
    """Slice layout plus resolved context nets and the shared scale table."""

    prior_channels: int
    spec: SliceSpec
    stages: tuple[StageNets, ...]
    scale_table: ScaleTable

    @classmethod
    def from_store(cls, store, cfg: NetworkConfig,
                   spec: SliceSpec | None = None) -> "McmModel":
        if spec is None:
            spec = cosine_slice(cfg.latent_channels)
        shapes = mcm_parameter_shapes(cfg.latent_channels, cfg.prior_channels, spec)

        def kern(name: str, stride: int = 1) -> ConvKernel:
            from .transform import _fetch
            return ConvKernel(weight=_fetch(store, f"{name}.weight", shapes[f"{name}.weight"]),
                              bias=_fetch(store, f"{name}.bias", shapes[f"{name}.bias"]),
                              stride=stride)

        stages = []
        for i in range(GROUP_COUNT):
            stage = f"mcm.stage{i + 1}"
            has_sc = i < GROUP_COUNT - 1
            stages.append(StageNets(
                cc1=kern(f"{stage}.cc.conv1"),
                cc2=kern(f"{stage}.cc.conv2"),
                sc=kern(f"{stage}.sc.conv") if has_sc else None,
                ep1=kern(f"{stage}.ep.conv1"),
                ep2=kern(f"{stage}.ep.conv2"),
                ep3=kern(f"{stage}.ep.conv3"),
            ))
        return cls(prior_channels=cfg.prior_channels, spec=spec,
                   stages=tuple(stages), scale_table=default_scale_table())


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x.astype(np.float64)).astype(np.float32)


def _channel_context(model: McmModel, stage: int, prior: np.ndarray,
                     decoded: np.ndarray) -> np.ndarray:
    """Channel path: 5x5 convs over the prior and fully-coded earlier groups."""
    nets = model.stages[stage]
    cc_in = prior if decoded.shape[0] == 0 else np.concatenate([prior, decoded], axis=0)
    return conv2d(gelu(conv2d(cc_in, nets.cc1)), nets.cc2)


def _head_params(model: McmModel, stage: int, prior: np.ndarray,
                 phi_cc: np.ndarray, partial: np.ndarray,
                 avail: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Parameter head given a precomputed channel context."""
    nets = model.stages[stage]
    n = model.spec.sizes[stage]
    if nets.sc is not None:
        phi_sc = conv2d(partial * avail[None, :, :], nets.sc)
        ep_in = np.concatenate([prior, phi_cc, phi_sc], axis=0)
    else:
        ep_in = np.concatenate([prior, phi_cc], axis=0)
    out = conv2d(gelu(conv2d(gelu(conv2d(ep_in, nets.ep1)), nets.ep2)), nets.ep3)
    mu = out[:n]
    sigma = np.clip(_softplus(out[n:]), SIGMA_MIN, SIGMA_MAX).astype(np.float32)
    return mu, sigma


def stage_entropy_params(model: McmModel, stage: int, prior: np.ndarray,
                         decoded: np.ndarray, partial: np.ndarray,
                         avail: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(mu, sigma) for one stage under a given availability state.

    decoded carries the earlier groups (may be 0 channels), partial the
    in-progress group, avail the 0/1 map of already-coded positions within it.
    Identical inputs give bit-identical outputs on both coder paths.
    """
    if not 0 <= stage < GROUP_COUNT:
        raise ConfigError(f"stage must be 0..3, got {stage}")
    phi_cc = _channel_context(model, stage, prior, decoded)
    return _head_params(model, stage, prior, phi_cc, partial, avail)


def _check_mcm_inputs(model: McmModel, prior: np.ndarray, channels: int,
                      height: int, width: int) -> None:
    if prior.shape != (model.prior_channels, height, width):
        raise ShapeError(f"prior shape {prior.shape} != "
                         f"({model.prior_channels}, {height}, {width})")
    if channels != model.spec.channels:
        raise ShapeError(f"latents have {channels} channels, "
                         f"slice covers {model.spec.channels}")


def mcm_encode(y: np.ndarray, prior: np.ndarray, model: McmModel,
               record: list | None = None, rate_info: list | None = None):
    """Code all four groups; returns ([stage bytes x4], y_hat).

    Symbols emit step-major, then channel-major, then row-major, then
    column-major; each stage gets its own coder state. y_hat is the decoder's
    exact reconstruction.
    """
    y = check_chw(y, "latents")
    prior = check_chw(prior, "prior")
    c, height, width = y.shape
    _check_mcm_inputs(model, prior, c, height, width)
    schedule = build_schedule(height, width)
    table = model.scale_table

    y_hat = np.zeros_like(y)
    segments = []
    for i in range(GROUP_COUNT):
        n = model.spec.sizes[i]
        off = model.spec.offsets[i]
        y_g = y[off:off + n]
        hat_g = np.zeros((n, height, width), dtype=np.float32)
        phi_cc = _channel_context(model, i, prior, y_hat[:off])
        avail = np.zeros((height, width), dtype=np.float32)
        symbols: list[int] = []
        tables = []
        for k, mask in enumerate(schedule.stage_masks[i]):
            mu, sigma = _head_params(model, i, prior, phi_cc, hat_g, avail)
            if record is not None:
                record.append((i, k, mu.copy(), sigma.copy()))
            rr, cc = np.nonzero(mask)
            syms, recon = quantize_mixed(y_g[:, rr, cc], mu[:, rr, cc])
            hat_g[:, rr, cc] = recon
            idx = table.index_for(sigma[:, rr, cc])
            symbols.extend(int(s) + SYMBOL_BOUND for s in syms.ravel())
            tables.extend(table.tables[t] for t in idx.ravel())
            avail = avail + mask.astype(np.float32)
        segment = encode_stream(symbols, tables)
        if rate_info is not None:
            rate_info.append((len(segment), estimate_rate(symbols, tables)))
        segments.append(segment)
        y_hat[off:off + n] = hat_g
    return segments, y_hat


def _decode_groups(segments, prior: np.ndarray, model: McmModel,
                   height: int, width: int, record: list | None,
                   stats: dict | None) -> np.ndarray:
    schedule = build_schedule(height, width)
    table = model.scale_table
    y_hat = np.zeros((model.spec.channels, height, width), dtype=np.float32)
    passes = 0
    for i, segment in enumerate(segments):
        n = model.spec.sizes[i]
        off = model.spec.offsets[i]
        hat_g = np.zeros((n, height, width), dtype=np.float32)
        phi_cc = _channel_context(model, i, prior, y_hat[:off])
        avail = np.zeros((height, width), dtype=np.float32)
        dec = RangeDecoder(segment)
        for k, mask in enumerate(schedule.stage_masks[i]):
            mu, sigma = _head_params(model, i, prior, phi_cc, hat_g, avail)
            passes += 1
            if record is not None:
                record.append((i, k, mu.copy(), sigma.copy()))
            rr, cc = np.nonzero(mask)
            idx = table.index_for(sigma[:, rr, cc]).ravel()
            decoded = np.empty(len(idx), dtype=np.float32)
            for t, ti in enumerate(idx):
                decoded[t] = dec.decode_next(table.tables[ti]) - SYMBOL_BOUND
            hat_g[:, rr, cc] = decoded.reshape(n, len(rr)) + mu[:, rr, cc]
            avail = avail + mask.astype(np.float32)
        y_hat[off:off + n] = hat_g
    if stats is not None:
        stats["passes"] = passes
        stats["bytes_read"] = sum(len(s) for s in segments)
    return y_hat


def mcm_decode(segments, prior: np.ndarray, model: McmModel,
               record: list | None = None, stats: dict | None = None) -> np.ndarray:
    """Decode all four stage segments back to y_hat (bit-exact vs encode)."""
    prior = check_chw(prior, "prior")
    if len(segments) != GROUP_COUNT:
        raise DecodeError(f"need {GROUP_COUNT} segments, got {len(segments)}")
    height, width = prior.shape[1], prior.shape[2]
    _check_mcm_inputs(model, prior, model.spec.channels, height, width)
    return _decode_groups(segments, prior, model, height, width, record, stats)


def progressive_decode(segments, prior: np.ndarray, model: McmModel,
                       record: list | None = None,
                       stats: dict | None = None) -> np.ndarray:
    """Decode the first k <= 4 group segments; fill the rest with predicted means.

    Decoded groups come out bitwise equal to a full decode of the same
    prefix. Fills use a zeroed spatial context (nothing of the group is
    coded) with the channel context read from whatever precedes the group;
    stage 4 has no spatial path, so its fill equals the full-decode mean.
    """
    prior = check_chw(prior, "prior")
    k = len(segments)
    if not 1 <= k <= GROUP_COUNT:
        raise DecodeError(f"need 1..{GROUP_COUNT} segments, got {k}")
    height, width = prior.shape[1], prior.shape[2]
    _check_mcm_inputs(model, prior, model.spec.channels, height, width)
    y_hat = _decode_groups(segments, prior, model, height, width, record, stats)
    zero_avail = np.zeros((height, width), dtype=np.float32)
    for i in range(k, GROUP_COUNT):
        n = model.spec.sizes[i]
        off = model.spec.offsets[i]
        mu, _ = stage_entropy_params(
            model, i, prior, y_hat[:off],
            np.zeros((n, height, width), dtype=np.float32), zero_avail)
        y_hat[off:off + n] = mu
    return y_hat

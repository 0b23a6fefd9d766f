"""Analysis/synthesis transforms for the main and hyper latents.

Both coders are four-stage (main) or two-stage (hyper) stacks of
stride-2-resample + residual-attention-block stages. The analysis side
downsamples first and refines after; the synthesis side mirrors it with the
blocks first and a transposed conv after, walking the channel widths in
reverse. The final synthesis stage maps back to 3 RGB planes, clamped to
[0, 1].

Parameters live in a flat name -> array mapping under canonical names:

    <net>.stage<i>.conv.{weight,bias}
    <net>.stage<i>.rnab<j>.ln1.{weight,bias}
    <net>.stage<i>.rnab<j>.na.{wq,wk,wv,wo,rpb}
    <net>.stage<i>.rnab<j>.ln2.{weight,bias}
    <net>.stage<i>.rnab<j>.mlp.{fc1,fc2}.{weight,bias}

with <net> one of ga (main analysis), gs (main synthesis), ha (hyper
analysis), hs (hyper synthesis); stages and blocks are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .blocks import IcsaParams, NaParams, RnabParams, icsa_forward
from .errors import ConfigError, DimensionError, MissingParameter, ShapeError
from .tensor import ConvKernel, check_chw

DOWNSAMPLE_MAIN = 16   # four stride-2 stages
DOWNSAMPLE_HYPER = 4   # two more stride-2 stages
PAD_MULTIPLE = 64      # input dims must divide by all six stride-2 stages


@dataclass(frozen=True)
class NetworkConfig:
    """Channel/depth/head layout for one model profile."""

    main_channels: tuple[int, int, int, int] = (128, 192, 256, 320)
    main_depths: tuple[int, int, int, int] = (2, 2, 6, 2)
    main_heads: tuple[int, int, int, int] = (8, 12, 16, 20)
    main_window: int = 7
    hyper_channels: tuple[int, int] = (192, 192)
    hyper_depths: tuple[int, int] = (2, 2)
    hyper_heads: int = 12
    hyper_window: int = 3
    prior_channels: int = 384

    def __post_init__(self) -> None:
        for name, want in (("main_channels", 4), ("main_depths", 4),
                           ("main_heads", 4), ("hyper_channels", 2),
                           ("hyper_depths", 2)):
            got = getattr(self, name)
            if len(got) != want or any(int(v) < 1 for v in got):
                raise ConfigError(f"{name} must be {want} positive ints, got {got}")
        for c, h in zip(self.main_channels, self.main_heads):
            if c % h != 0:
                raise ConfigError(f"heads {h} must divide channels {c}")
        for c in self.hyper_channels:
            if c % self.hyper_heads != 0:
                raise ConfigError(f"hyper heads {self.hyper_heads} must divide {c}")
        for w in (self.main_window, self.hyper_window):
            if w < 1 or w % 2 == 0:
                raise ConfigError(f"windows must be odd and positive, got {w}")
        if self.prior_channels < 2 or self.prior_channels % 2 != 0:
            raise ConfigError(f"prior_channels must be even >= 2, got {self.prior_channels}")

    @property
    def latent_channels(self) -> int:
        return self.main_channels[3]

    @property
    def hyper_latent_channels(self) -> int:
        return self.hyper_channels[1]

    def to_profile(self) -> str:
        """Stable key=value text form, embedded in weight files."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                lines.append(f"{f.name}={','.join(str(int(x)) for x in v)}")
            else:
                lines.append(f"{f.name}={int(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_profile(cls, text: str) -> "NetworkConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"bad profile line: {line!r}")
            key, _, raw = line.partition("=")
            if key not in known:
                raise ConfigError(f"unknown profile key: {key!r}")
            if "," in raw or "tuple" in str(known[key].type):
                kwargs[key] = tuple(int(v) for v in raw.split(","))
            else:
                kwargs[key] = int(raw)
        missing = set(known) - set(kwargs)
        if missing:
            raise ConfigError(f"profile missing keys: {sorted(missing)}")
        return cls(**kwargs)


DEFAULT_CONFIG = NetworkConfig()

# small profile for fast tests: same topology, toy widths
TINY_CONFIG = NetworkConfig(
    main_channels=(8, 12, 16, 20),
    main_depths=(1, 1, 1, 1),
    main_heads=(2, 3, 4, 5),
    main_window=7,
    hyper_channels=(12, 12),
    hyper_depths=(1, 1),
    hyper_heads=3,
    hyper_window=3,
    prior_channels=40,
)


def _rnab_shapes(prefix: str, channels: int, heads: int, window: int) -> dict:
    span = 2 * window - 1
    c = channels
    return {
        f"{prefix}.ln1.weight": (c,),
        f"{prefix}.ln1.bias": (c,),
        f"{prefix}.na.wq": (c, c),
        f"{prefix}.na.wk": (c, c),
        f"{prefix}.na.wv": (c, c),
        f"{prefix}.na.wo": (c, c),
        f"{prefix}.na.rpb": (heads, span, span),
        f"{prefix}.ln2.weight": (c,),
        f"{prefix}.ln2.bias": (c,),
        f"{prefix}.mlp.fc1.weight": (2 * c, c),
        f"{prefix}.mlp.fc1.bias": (2 * c,),
        f"{prefix}.mlp.fc2.weight": (c, 2 * c),
        f"{prefix}.mlp.fc2.bias": (c,),
    }


def _stage_plans(cfg: NetworkConfig):
    """(net, stage, conv (out, in, k), block channels/depth/heads/window) tuples."""
    mc, md, mh = cfg.main_channels, cfg.main_depths, cfg.main_heads
    hc, hd = cfg.hyper_channels, cfg.hyper_depths
    plans = []
    for i in range(4):
        cin = 3 if i == 0 else mc[i - 1]
        k = 5 if i == 0 else 3
        plans.append(("ga", i + 1, (mc[i], cin, k), mc[i], md[i], mh[i], cfg.main_window))
    for i in range(4):
        j = 3 - i                       # mirror the encoder widths
        blk_c = mc[j]
        cout = 3 if i == 3 else mc[j - 1]
        k = 5 if i == 3 else 3
        plans.append(("gs", i + 1, (cout, blk_c, k), blk_c, md[j], mh[j], cfg.main_window))
    for i in range(2):
        cin = mc[3] if i == 0 else hc[0]
        plans.append(("ha", i + 1, (hc[i], cin, 3), hc[i], hd[i], cfg.hyper_heads,
                      cfg.hyper_window))
    for i in range(2):
        j = 1 - i
        blk_c = hc[j]
        cout = hc[0] if i == 0 else cfg.prior_channels
        plans.append(("hs", i + 1, (cout, blk_c, 3), blk_c, hd[j], cfg.hyper_heads,
                      cfg.hyper_window))
    return plans


def transform_parameter_shapes(cfg: NetworkConfig) -> dict[str, tuple]:
    """Every canonical transform parameter name with its demanded shape."""
    shapes: dict[str, tuple] = {}
    for net, stage, (cout, cin, k), blk_c, depth, heads, window in _stage_plans(cfg):
        prefix = f"{net}.stage{stage}"
        shapes[f"{prefix}.conv.weight"] = (cout, cin, k, k)
        shapes[f"{prefix}.conv.bias"] = (cout,)
        for j in range(1, depth + 1):
            shapes.update(_rnab_shapes(f"{prefix}.rnab{j}", blk_c, heads, window))
    return shapes


def _fetch(store, name: str, shape: tuple) -> np.ndarray:
    try:
        arr = store[name]
    except KeyError:
        raise MissingParameter(f"parameter {name!r} not found") from None
    if arr.shape != shape:
        raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
    if arr.dtype != np.float32:
        raise ShapeError(f"{name} must be float32, got {arr.dtype}")
    return arr


def _rnab_from(store, prefix: str, channels: int, heads: int, window: int) -> RnabParams:
    shapes = _rnab_shapes(prefix, channels, heads, window)
    g = lambda leaf: _fetch(store, f"{prefix}.{leaf}", shapes[f"{prefix}.{leaf}"])
    return RnabParams(
        ln1_weight=g("ln1.weight"), ln1_bias=g("ln1.bias"),
        na=NaParams(wq=g("na.wq"), wk=g("na.wk"), wv=g("na.wv"), wo=g("na.wo"),
                    bias_table=g("na.rpb"), window=window),
        ln2_weight=g("ln2.weight"), ln2_bias=g("ln2.bias"),
        fc1_weight=g("mlp.fc1.weight"), fc1_bias=g("mlp.fc1.bias"),
        fc2_weight=g("mlp.fc2.weight"), fc2_bias=g("mlp.fc2.bias"),
    )


@dataclass(frozen=True)
class TransformModel:
    """All four transforms resolved against one parameter store."""

    config: NetworkConfig
    ga: tuple[IcsaParams, ...]
    gs: tuple[IcsaParams, ...]
    ha: tuple[IcsaParams, ...]
    hs: tuple[IcsaParams, ...]

    @classmethod
    def from_store(cls, store, cfg: NetworkConfig) -> "TransformModel":
        nets: dict[str, list[IcsaParams]] = {"ga": [], "gs": [], "ha": [], "hs": []}
        for net, stage, (cout, cin, k), blk_c, depth, heads, window in _stage_plans(cfg):
            prefix = f"{net}.stage{stage}"
            conv = ConvKernel(
                weight=_fetch(store, f"{prefix}.conv.weight", (cout, cin, k, k)),
                bias=_fetch(store, f"{prefix}.conv.bias", (cout,)),
                stride=2,
            )
            blocks = tuple(
                _rnab_from(store, f"{prefix}.rnab{j}", blk_c, heads, window)
                for j in range(1, depth + 1))
            nets[net].append(IcsaParams(conv=conv, blocks=blocks))
        return cls(config=cfg, ga=tuple(nets["ga"]), gs=tuple(nets["gs"]),
                   ha=tuple(nets["ha"]), hs=tuple(nets["hs"]))


def analysis_main(x: np.ndarray, model: TransformModel) -> np.ndarray:
    """RGB (3, H, W) -> latents (C4, H/16, W/16); dims must divide by 64."""
    x = check_chw(x, "image tensor")
    if x.shape[0] != 3:
        raise ShapeError(f"expected 3 input planes, got {x.shape[0]}")
    if x.shape[1] % PAD_MULTIPLE or x.shape[2] % PAD_MULTIPLE:
        raise DimensionError(
            f"image dims {x.shape[1]}x{x.shape[2]} must be multiples of {PAD_MULTIPLE}")
    for stage in model.ga:
        x = icsa_forward(x, stage, "analysis")
    return x


def synthesis_main(y: np.ndarray, model: TransformModel) -> np.ndarray:
    """Latents (C4, h, w) -> RGB (3, 16h, 16w), clamped to [0, 1]."""
    y = check_chw(y, "latent tensor")
    if y.shape[0] != model.config.latent_channels:
        raise ShapeError(f"latents have {y.shape[0]} channels, "
                         f"model expects {model.config.latent_channels}")
    for stage in model.gs:
        y = icsa_forward(y, stage, "synthesis")
    return np.clip(y, 0.0, 1.0)


def analysis_hyper(y: np.ndarray, model: TransformModel) -> np.ndarray:
    """Latents (C4, h, w) -> hyper-latents (C6, h/4, w/4); dims must divide by 4."""
    y = check_chw(y, "latent tensor")
    if y.shape[0] != model.config.latent_channels:
        raise ShapeError(f"latents have {y.shape[0]} channels, "
                         f"model expects {model.config.latent_channels}")
    if y.shape[1] % 4 or y.shape[2] % 4:
        raise DimensionError(f"latent dims {y.shape[1]}x{y.shape[2]} must divide by 4")
    for stage in model.ha:
        y = icsa_forward(y, stage, "analysis")
    return y


def synthesis_hyper(zhat: np.ndarray, model: TransformModel) -> np.ndarray:
    """Hyper-latents (C6, h/4, w/4) -> entropy prior (P, h, w)."""
    zhat = check_chw(zhat, "hyper-latent tensor")
    if zhat.shape[0] != model.config.hyper_latent_channels:
        raise ShapeError(f"hyper-latents have {zhat.shape[0]} channels, "
                         f"model expects {model.config.hyper_latent_channels}")
    out = zhat
    for stage in model.hs:
        out = icsa_forward(out, stage, "synthesis")
    return out

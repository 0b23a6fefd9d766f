"""Canonical tensor roster for a network profile.

Everything here restates the published weight-file contract
(docs/weights.md in the codec repository): the profile grammar, the
cosine channel split, and the exact name -> shape roster a conforming
`.tlwt` must contain. The exporter trusts this module as its oracle for
what a checkpoint has to provide.
"""

import math
from dataclasses import dataclass, fields

from .errors import ManifestError

PROFILE_TUPLE_LENGTHS = {
    "main_channels": 4,
    "main_depths": 4,
    "main_heads": 4,
    "hyper_channels": 2,
    "hyper_depths": 2,
}


@dataclass(frozen=True)
class Profile:
    """The nine architecture knobs that fix every tensor shape."""

    main_channels: tuple[int, ...] = (128, 192, 256, 320)
    main_depths: tuple[int, ...] = (2, 2, 6, 2)
    main_heads: tuple[int, ...] = (8, 12, 16, 20)
    main_window: int = 7
    hyper_channels: tuple[int, ...] = (192, 192)
    hyper_depths: tuple[int, ...] = (2, 2)
    hyper_heads: int = 12
    hyper_window: int = 3
    prior_channels: int = 384

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            want = PROFILE_TUPLE_LENGTHS.get(f.name)
            if want is not None:
                ok = isinstance(v, tuple) and len(v) == want and \
                    all(isinstance(x, int) and x > 0 for x in v)
            else:
                ok = isinstance(v, int) and v > 0
            if not ok:
                raise ManifestError(f"bad profile field {f.name}: {v!r}")

    def to_text(self) -> str:
        """The key=value form embedded verbatim in weight files."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                lines.append(f"{f.name}={','.join(str(x) for x in v)}")
            else:
                lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Profile":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            if not sep or key not in known:
                raise ManifestError(f"bad profile line: {line!r}")
            if key in PROFILE_TUPLE_LENGTHS:
                kwargs[key] = tuple(int(v) for v in raw.split(","))
            else:
                kwargs[key] = int(raw)
        missing = known - set(kwargs)
        if missing:
            raise ManifestError(f"profile missing keys: {sorted(missing)}")
        return cls(**kwargs)


PROFILES = {
    "default": Profile(),
    "tiny": Profile(
        main_channels=(8, 12, 16, 20),
        main_depths=(1, 1, 1, 1),
        main_heads=(2, 3, 4, 5),
        main_window=7,
        hyper_channels=(12, 12),
        hyper_depths=(1, 1),
        hyper_heads=3,
        hyper_window=3,
        prior_channels=40,
    ),
}


def named_profile(name: str) -> Profile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ManifestError(
            f"unknown profile {name!r}; known: {sorted(PROFILES)}") from None


def cosine_groups(channels: int) -> tuple[int, ...]:
    """Four group sizes with interior boundaries floor(C*(1-cos(pi*i/8))).

    Only i in 1..3 goes through the formula; the endpoints are 0 and C by
    definition (evaluating the i=4 term in floats loses a channel, since
    cos(pi/2) does not come out exactly zero).
    """
    if channels < 16:
        raise ManifestError(f"cosine split needs >= 16 channels, got {channels}")
    bounds = [0] + [math.floor(channels * (1.0 - math.cos(math.pi * i / 8)))
                    for i in (1, 2, 3)] + [channels]
    return tuple(b - a for a, b in zip(bounds, bounds[1:]))


def _block_shapes(prefix: str, width: int, heads: int, window: int) -> dict:
    c, span = width, 2 * window - 1
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
        f"{prefix}.mlp.fc2.bias": (c, ),
    }


def _transform_stages(p: Profile):
    """(net, stage, conv (out, in, k), block width/count/heads/window)."""
    mc, md, mh = p.main_channels, p.main_depths, p.main_heads
    hc, hd = p.hyper_channels, p.hyper_depths
    out = []
    for i in range(4):
        cin = 3 if i == 0 else mc[i - 1]
        k = 5 if i == 0 else 3
        out.append(("ga", i + 1, (mc[i], cin, k), mc[i], md[i], mh[i],
                    p.main_window))
    for i in range(4):
        j = 3 - i
        cout = 3 if i == 3 else mc[j - 1]
        k = 5 if i == 3 else 3
        out.append(("gs", i + 1, (cout, mc[j], k), mc[j], md[j], mh[j],
                    p.main_window))
    for i in range(2):
        cin = mc[3] if i == 0 else hc[0]
        out.append(("ha", i + 1, (hc[i], cin, 3), hc[i], hd[i],
                    p.hyper_heads, p.hyper_window))
    for i in range(2):
        j = 1 - i
        cout = hc[0] if i == 0 else p.prior_channels
        out.append(("hs", i + 1, (cout, hc[j], 3), hc[j], hd[j],
                    p.hyper_heads, p.hyper_window))
    return out


def roster(p: Profile) -> dict[str, tuple[int, ...]]:
    """Every demanded canonical name with its shape, deterministic order."""
    shapes: dict[str, tuple[int, ...]] = {}
    for net, stage, (cout, cin, k), width, depth, heads, window in \
            _transform_stages(p):
        prefix = f"{net}.stage{stage}"
        shapes[f"{prefix}.conv.weight"] = (cout, cin, k, k)
        shapes[f"{prefix}.conv.bias"] = (cout,)
        for b in range(1, depth + 1):
            shapes.update(_block_shapes(f"{prefix}.rnab{b}", width, heads,
                                        window))

    shapes["fm.mu"] = (p.hyper_channels[1],)
    shapes["fm.sigma"] = (p.hyper_channels[1],)

    groups = cosine_groups(p.main_channels[3])
    prior = p.prior_channels
    cum = 0
    for i, n in enumerate(groups, start=1):
        pre = f"mcm.stage{i}"
        shapes[f"{pre}.cc.conv1.weight"] = (2 * n, prior + cum, 5, 5)
        shapes[f"{pre}.cc.conv1.bias"] = (2 * n,)
        shapes[f"{pre}.cc.conv2.weight"] = (2 * n, 2 * n, 5, 5)
        shapes[f"{pre}.cc.conv2.bias"] = (2 * n,)
        if i < 4:
            shapes[f"{pre}.sc.conv.weight"] = (2 * n, n, 3, 3)
            shapes[f"{pre}.sc.conv.bias"] = (2 * n,)
        fused = prior + (4 * n if i < 4 else 2 * n)
        shapes[f"{pre}.ep.conv1.weight"] = (2 * n, fused, 1, 1)
        shapes[f"{pre}.ep.conv1.bias"] = (2 * n,)
        for c in (2, 3):
            shapes[f"{pre}.ep.conv{c}.weight"] = (2 * n, 2 * n, 1, 1)
            shapes[f"{pre}.ep.conv{c}.bias"] = (2 * n,)
        cum += n
    return shapes


def parameter_count(p: Profile) -> int:
    return sum(math.prod(s) for s in roster(p).values())

"""Seeded self-checks runnable without a test harness.

Each check exercises one load-bearing property of the codec with weights
derived from the given seed: frozen numeric spot values, coder roundtrips,
the coding schedule, encoder/decoder parameter agreement, and end-to-end
determinism. The CLI exposes them as `tinylic selftest --seed N`.
"""

from __future__ import annotations

import time

import numpy as np

from .codec import (
    Codec,
    ImageBuffer,
    decode_image,
    encode_image,
    psnr,
)
from .coder import (
    build_cdf,
    decode_stream,
    encode_stream,
    full_pmf,
    gaussian_pmf,
    quantize_mixed,
)
from .mcm import (
    McmModel,
    build_schedule,
    cosine_slice,
    linear_slice,
    mcm_decode,
    mcm_encode,
)
from .tensor import gelu
from .transform import TINY_CONFIG
from .weights import seeded_init


def _check_spot_values(seed: int) -> None:
    g = float(gelu(np.array([1.0], dtype=np.float32))[0])
    assert abs(g - 0.841345) < 1e-5, f"gelu(1) = {g}"
    p = float(gaussian_pmf(np.array([0]), 1.0)[0])
    assert abs(p - 0.382925) < 1e-5, f"pmf(0 | sigma=1) = {p}"
    a = ImageBuffer(pixels=np.full((16, 16, 3), 40, dtype=np.uint8))
    b = ImageBuffer(pixels=np.full((16, 16, 3), 41, dtype=np.uint8))
    d = psnr(a, b)
    assert abs(d - 48.1308) < 1e-3, f"psnr at unit difference = {d}"


def _check_quantizer(seed: int) -> None:
    s, r = quantize_mixed(np.float32(1.4), np.float32(0.2))
    assert int(s) == 1 and abs(float(r) - 1.2) < 1e-6
    s, _ = quantize_mixed(np.array([0.5, -0.5], np.float32), np.zeros(2, np.float32))
    assert s.tolist() == [1, -1], f"half rounding broke: {s.tolist()}"


def _check_slicing(seed: int) -> None:
    assert cosine_slice(320).sizes == (24, 69, 104, 123)
    assert linear_slice(320).sizes == (80, 80, 80, 80)
    assert build_schedule(8, 12).total_passes == 9


def _check_range_coder(seed: int) -> None:
    rng = np.random.default_rng(seed)
    for _ in range(40):
        n = int(rng.integers(1, 400))
        pmf = rng.random(int(rng.integers(2, 80)))
        table = build_cdf(pmf / pmf.sum())
        syms = rng.integers(0, len(pmf), n).tolist()
        assert decode_stream(encode_stream(syms, table), table, n) == syms
    table = build_cdf(full_pmf(1.7))
    syms = rng.integers(0, 127, 5000).tolist()
    assert decode_stream(encode_stream(syms, table), table, 5000) == syms


def _check_causality(seed: int) -> None:
    store = seeded_init(TINY_CONFIG, seed)
    model = McmModel.from_store(store, TINY_CONFIG)
    rng = np.random.default_rng(seed + 1)
    for _ in range(3):
        y = (rng.standard_normal((20, 4, 6)) * 4).astype(np.float32)
        prior = rng.standard_normal((40, 4, 6)).astype(np.float32)
        enc_rec: list = []
        segments, y_hat = mcm_encode(y, prior, model, record=enc_rec)
        dec_rec: list = []
        decoded = mcm_decode(segments, prior, model, record=dec_rec)
        assert decoded.tobytes() == y_hat.tobytes(), "reconstruction diverged"
        assert len(enc_rec) == len(dec_rec) == 9
        for (si, ki, mu_e, sg_e), (sj, kj, mu_d, sg_d) in zip(enc_rec, dec_rec):
            assert (si, ki) == (sj, kj)
            assert mu_e.tobytes() == mu_d.tobytes(), f"mu stage {si} step {ki}"
            assert sg_e.tobytes() == sg_d.tobytes(), f"sigma stage {si} step {ki}"


def _check_pipeline(seed: int) -> None:
    codec = Codec.from_store(seeded_init(TINY_CONFIG, seed))
    rng = np.random.default_rng(seed + 2)
    img = ImageBuffer(pixels=rng.integers(0, 256, (64, 64, 3)).astype(np.uint8))
    data = encode_image(img, codec, lambda_index=2)
    assert encode_image(img, codec, lambda_index=2) == data, "encode not deterministic"
    out1 = decode_image(data, codec)
    out2 = decode_image(data, codec)
    assert out1.pixels.shape == (64, 64, 3)
    assert np.array_equal(out1.pixels, out2.pixels), "decode not deterministic"
    for k in (1, 2, 3):
        partial = decode_image(data, codec, stages=k)
        assert partial.pixels.shape == (64, 64, 3)


CHECKS = (
    ("numeric spot values", _check_spot_values),
    ("mean-removed quantizer", _check_quantizer),
    ("channel slicing and schedule", _check_slicing),
    ("range coder roundtrip", _check_range_coder),
    ("context-model causality", _check_causality),
    ("pipeline determinism", _check_pipeline),
)


def run_selftest(seed: int, log=print) -> bool:
    """Run every check; report one line per check. True when all pass."""
    ok = True
    for name, fn in CHECKS:
        start = time.monotonic()
        try:
            fn(seed)
        except AssertionError as e:
            ok = False
            log(f"FAIL  {name}: {e}")
        else:
            log(f"ok    {name} ({time.monotonic() - start:.2f}s)")
    return ok

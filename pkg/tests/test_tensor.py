"""Tensor kernel tests.

Convolutions are checked against a literal direct-summation oracle written
with nothing but index loops, and against the adjoint identity
<conv(x), y> == <x, tconv(y)>. Scalar nonlinearities are checked against
mpmath evaluated at high precision, with the frozen constants asserted too.
"""

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tinylic.errors import ShapeError
from tinylic.tensor import (
    ConvKernel,
    conv2d,
    from_tokens,
    gelu,
    layer_norm,
    linear,
    softmax,
    tconv2d,
    to_tokens,
)


def conv_oracle(x, weight, bias, stride):
    """Direct-summation reference convolution, zero padding (k-1)/2."""
    cout, cin, k, _ = weight.shape
    pad = (k - 1) // 2
    h, w = x.shape[1], x.shape[2]
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    out = np.zeros((cout, ho, wo), dtype=np.float64)
    for o in range(cout):
        for a in range(ho):
            for b in range(wo):
                acc = float(bias[o])
                for i in range(cin):
                    for kh in range(k):
                        for kw in range(k):
                            r = a * stride + kh - pad
                            c = b * stride + kw - pad
                            if 0 <= r < h and 0 <= c < w:
                                acc += float(weight[o, i, kh, kw]) * float(x[i, r, c])
                out[o, a, b] = acc
    return out.astype(np.float32)


def tconv_oracle(x, weight, bias, stride):
    """Direct-summation reference transposed convolution."""
    cout, cin, k, _ = weight.shape
    pad = (k - 1) // 2
    h, w = x.shape[1], x.shape[2]
    ho, wo = stride * h, stride * w
    out = np.zeros((cout, ho, wo), dtype=np.float64)
    for o in range(cout):
        out[o] += float(bias[o])
    for i in range(cin):
        for hh in range(h):
            for ww in range(w):
                for kh in range(k):
                    for kw in range(k):
                        a = stride * hh + kh - pad
                        b = stride * ww + kw - pad
                        if 0 <= a < ho and 0 <= b < wo:
                            for o in range(cout):
                                out[o, a, b] += float(weight[o, i, kh, kw]) * float(x[i, hh, ww])
    return out.astype(np.float32)


def rand_kernel(rng, cout, cin, k, stride):
    return ConvKernel(
        weight=rng.standard_normal((cout, cin, k, k)).astype(np.float32),
        bias=rng.standard_normal(cout).astype(np.float32),
        stride=stride,
    )


class TestConv2d:
    def test_identity_1x1(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 6, 5)).astype(np.float32)
        eye = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
        k = ConvKernel(weight=eye, bias=np.zeros(3, dtype=np.float32), stride=1)
        np.testing.assert_array_equal(conv2d(x, k), x)

    def test_ones_3x3_border_counts(self):
        # all-ones kernel over an all-ones 5x5 image counts in-bounds taps
        x = np.ones((1, 5, 5), dtype=np.float32)
        k = ConvKernel(weight=np.ones((1, 1, 3, 3), dtype=np.float32),
                       bias=np.zeros(1, dtype=np.float32), stride=1)
        out = conv2d(x, k)
        assert out[0, 2, 2] == 9.0
        assert out[0, 0, 2] == 6.0
        assert out[0, 2, 0] == 6.0
        assert out[0, 0, 0] == 4.0
        assert out[0, 4, 4] == 4.0

    @pytest.mark.parametrize("k,stride,h,w", [
        (1, 1, 5, 7), (3, 1, 6, 5), (5, 1, 7, 7),
        (3, 2, 6, 8), (5, 2, 8, 6), (1, 2, 4, 4),
    ])
    def test_matches_direct_summation(self, k, stride, h, w):
        rng = np.random.default_rng(k * 100 + stride * 10 + h)
        x = rng.standard_normal((3, h, w)).astype(np.float32)
        kern = rand_kernel(rng, 4, 3, k, stride)
        got = conv2d(x, kern)
        want = conv_oracle(x, kern.weight, kern.bias, stride)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)

    def test_stride2_halves_even_dims(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 12, 20)).astype(np.float32)
        for k in (3, 5):
            kern = rand_kernel(rng, 5, 2, k, 2)
            assert conv2d(x, kern).shape == (5, 6, 10)

    def test_four_stride2_convs_divide_by_16(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((3, 64, 64)).astype(np.float32)
        chans = [3, 4, 5, 6, 7]
        for i in range(4):
            kern = rand_kernel(rng, chans[i + 1], chans[i], 3, 2)
            x = conv2d(x, kern)
        assert x.shape == (7, 4, 4)

    def test_channel_mismatch_raises(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((3, 4, 4)).astype(np.float32)
        kern = rand_kernel(rng, 2, 4, 3, 1)
        with pytest.raises(ShapeError):
            conv2d(x, kern)

    def test_purity(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((3, 9, 7)).astype(np.float32)
        kern = rand_kernel(rng, 4, 3, 5, 2)
        a = conv2d(x, kern)
        b = conv2d(x, kern)
        assert a.tobytes() == b.tobytes()


class TestTconv2d:
    @pytest.mark.parametrize("k,stride,h,w", [
        (1, 1, 4, 6), (3, 1, 5, 5), (3, 2, 3, 4), (5, 2, 4, 3),
    ])
    def test_matches_direct_summation(self, k, stride, h, w):
        rng = np.random.default_rng(k * 7 + stride + h)
        x = rng.standard_normal((3, h, w)).astype(np.float32)
        kern = rand_kernel(rng, 2, 3, k, stride)
        got = tconv2d(x, kern)
        want = tconv_oracle(x, kern.weight, kern.bias, stride)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)

    def test_stride2_doubles_dims(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 6, 9)).astype(np.float32)
        kern = rand_kernel(rng, 3, 4, 3, 2)
        assert tconv2d(x, kern).shape == (3, 12, 18)

    def test_1x1_stride1_is_channel_mix(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((3, 5, 5)).astype(np.float32)
        kern = rand_kernel(rng, 2, 3, 1, 1)
        got = tconv2d(x, kern)
        want = np.tensordot(kern.weight[:, :, 0, 0].astype(np.float64),
                            x.astype(np.float64), axes=(1, 0))
        want += kern.bias.astype(np.float64)[:, None, None]
        np.testing.assert_allclose(got, want.astype(np.float32), rtol=1e-6)

    @pytest.mark.parametrize("k", [3, 5])
    def test_adjoint_of_stride2_conv(self, k):
        # <conv(x), y> == <x, tconv(y)> with transposed channel axes, no bias
        rng = np.random.default_rng(k)
        x = rng.standard_normal((3, 8, 10)).astype(np.float32)
        y = rng.standard_normal((4, 4, 5)).astype(np.float32)
        w = rng.standard_normal((4, 3, k, k)).astype(np.float32)
        zero4 = np.zeros(4, dtype=np.float32)
        zero3 = np.zeros(3, dtype=np.float32)
        fwd = conv2d(x, ConvKernel(weight=w, bias=zero4, stride=2))
        bwd = tconv2d(y, ConvKernel(weight=np.ascontiguousarray(w.transpose(1, 0, 2, 3)),
                                    bias=zero3, stride=2))
        lhs = float(np.vdot(fwd.astype(np.float64), y.astype(np.float64)))
        rhs = float(np.vdot(x.astype(np.float64), bwd.astype(np.float64)))
        assert lhs == pytest.approx(rhs, rel=1e-4)

    def test_inverts_conv_shape_map_on_even_dims(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((3, 14, 6)).astype(np.float32)
        down = rand_kernel(rng, 5, 3, 3, 2)
        up = rand_kernel(rng, 3, 5, 3, 2)
        assert tconv2d(conv2d(x, down), up).shape == x.shape


class TestLayerNorm:
    def test_normalizes_rows(self):
        rng = np.random.default_rng(8)
        t = rng.standard_normal((11, 32)).astype(np.float32)
        w = np.ones(32, dtype=np.float32)
        b = np.zeros(32, dtype=np.float32)
        out = layer_norm(t, w, b).astype(np.float64)
        assert np.abs(out.mean(axis=1)).max() < 1e-5
        assert np.abs(out.var(axis=1) - 1.0).max() < 1e-3

    def test_constant_row_maps_to_bias(self):
        t = np.full((2, 8), 3.25, dtype=np.float32)
        w = np.full(8, 2.0, dtype=np.float32)
        b = np.arange(8, dtype=np.float32)
        out = layer_norm(t, w, b)
        np.testing.assert_allclose(out, np.stack([b, b]), atol=1e-4)

    def test_matches_naive_formula(self):
        rng = np.random.default_rng(9)
        t = rng.standard_normal((5, 16)).astype(np.float32)
        w = rng.standard_normal(16).astype(np.float32)
        b = rng.standard_normal(16).astype(np.float32)
        t64 = t.astype(np.float64)
        mu = t64.mean(axis=1, keepdims=True)
        var = ((t64 - mu) ** 2).mean(axis=1, keepdims=True)
        want = ((t64 - mu) / np.sqrt(var + 1e-6) * w + b).astype(np.float32)
        np.testing.assert_allclose(layer_norm(t, w, b), want, rtol=1e-5, atol=1e-6)

    def test_shape_mismatch_raises(self):
        t = np.zeros((3, 4), dtype=np.float32)
        with pytest.raises(ShapeError):
            layer_norm(t, np.ones(5, dtype=np.float32), np.zeros(5, dtype=np.float32))


class TestGelu:
    def test_spot_value_at_one(self):
        # frozen: x * Phi(x) at x=1, Phi the standard normal CDF
        assert float(gelu(np.float32(1.0))) == pytest.approx(0.841345, abs=1e-5)

    def test_matches_mpmath(self):
        xs = np.linspace(-6, 6, 41).astype(np.float32)
        got = gelu(xs)
        for x, g in zip(xs, got):
            want = mpmath.mpf(float(x)) * 0.5 * (1 + mpmath.erf(mpmath.mpf(float(x)) / mpmath.sqrt(2)))
            assert float(g) == pytest.approx(float(want), abs=1e-6)

    def test_zero_and_tails(self):
        assert float(gelu(np.float32(0.0))) == 0.0
        assert float(gelu(np.float32(10.0))) == pytest.approx(10.0, abs=1e-5)
        assert abs(float(gelu(np.float32(-10.0)))) < 1e-6


class TestLinear:
    def test_matches_matmul_oracle(self):
        rng = np.random.default_rng(10)
        t = rng.standard_normal((7, 5)).astype(np.float32)
        w = rng.standard_normal((3, 5)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        want = (t.astype(np.float64) @ w.astype(np.float64).T + b).astype(np.float32)
        np.testing.assert_allclose(linear(t, w, b), want, rtol=1e-6)

    def test_no_bias(self):
        t = np.ones((2, 3), dtype=np.float32)
        w = np.ones((4, 3), dtype=np.float32)
        np.testing.assert_allclose(linear(t, w), np.full((2, 4), 3.0, dtype=np.float32))

    def test_fan_in_mismatch_raises(self):
        with pytest.raises(ShapeError):
            linear(np.zeros((2, 3), dtype=np.float32), np.zeros((4, 5), dtype=np.float32))


class TestSoftmax:
    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_rows_are_distributions(self, seed):
        rng = np.random.default_rng(seed)
        x = (rng.standard_normal((4, 9)) * 5).astype(np.float32)
        p = softmax(x).astype(np.float64)
        assert (p >= 0).all()
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)

    def test_shift_invariance(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((3, 6)).astype(np.float32)
        np.testing.assert_allclose(softmax(x), softmax(x + 100.0), atol=1e-6)

    def test_uniform_on_constant(self):
        x = np.full((2, 5), 1.5, dtype=np.float32)
        np.testing.assert_allclose(softmax(x), 0.2, atol=1e-7)


class TestTokens:
    def test_roundtrip(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((5, 3, 4)).astype(np.float32)
        t = to_tokens(x)
        assert t.shape == (12, 5)
        np.testing.assert_array_equal(from_tokens(t, 3, 4), x)

    def test_row_major_position_order(self):
        x = np.arange(6, dtype=np.float32).reshape(1, 2, 3)
        t = to_tokens(x)
        np.testing.assert_array_equal(t[:, 0], np.arange(6, dtype=np.float32))

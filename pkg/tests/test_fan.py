"""Tests for the feature-steered correction unit and its stack."""

import numpy as np
import pytest

from fanorm.extractor import FeaturePyramid, PyramidLevel, extract, tiny_spec
from fanorm.fan import FanStack, FanUnitParams, apply_stack, fan_backward, fan_forward
from fanorm.ops import ShapeError, standardize_forward

from conftest import central_diff, rel_err


def make_level(z, crop_offset=(0, 0), scale=1, tap_index=0):
    return PyramidLevel(tap_index=tap_index, z=np.asarray(z),
                        crop_offset=crop_offset, scale=scale)


def loop_oracle(y, level, w_mult, w_add, eps):
    """Direct elementwise transcription of the correction formula."""
    n, c, h, w = y.shape
    mu = np.zeros(c)
    var = np.zeros(c)
    for k in range(c):
        vals = []
        for img in range(n):
            for i in range(h):
                for j in range(w):
                    vals.append(y[img, k, i, j])
        mu[k] = sum(vals) / len(vals)
        var[k] = sum((v - mu[k]) ** 2 for v in vals) / len(vals)

    t, l = level.crop_offset
    s = level.scale
    out = np.zeros((n, c, h, w))
    for img in range(n):
        for i in range(h):
            for j in range(w):
                zi = (i - t) // s
                zj = (j - l) // s
                zv = level.z[img, :, zi, zj].astype(np.float64)
                gamma = 1.0 / (1.0 + np.exp(-(w_mult @ zv)))
                beta = np.maximum(w_add @ zv, 0.0)
                for k in range(c):
                    yhat = (y[img, k, i, j] - mu[k]) / np.sqrt(var[k] + eps)
                    out[img, k, i, j] = yhat * gamma[k] + beta[k]
    return out


def test_forward_matches_loop_oracle(rng):
    y = rng.normal(size=(2, 4, 6, 6))
    z = rng.normal(size=(2, 5, 3, 3))
    w_mult = rng.normal(size=(4, 5))
    w_add = rng.normal(size=(4, 5))
    level = make_level(z, crop_offset=(0, 0), scale=2)
    params = FanUnitParams(w_mult=w_mult, w_add=w_add)
    out, cache = fan_forward(y, level, params)
    want = loop_oracle(y, level, w_mult, w_add, params.eps)
    assert out.shape == (2, 4, 6, 6)
    assert cache.offset == (0, 0)
    assert np.max(np.abs(out - want)) < 1e-5


def test_zero_gates_give_half_standardized(rng):
    y = rng.normal(loc=3.0, scale=2.0, size=(2, 3, 8, 8))
    z = rng.normal(size=(2, 4, 4, 4))
    params = FanUnitParams(w_mult=np.zeros((3, 4)), w_add=np.zeros((3, 4)))
    out, _ = fan_forward(y, make_level(z, scale=2), params)
    want, _ = standardize_forward(y, params.eps)
    assert np.max(np.abs(out - 0.5 * want)) < 1e-6
    # doubled output recovers the plain standardized map: mean ~0, var ~1
    doubled = 2.0 * out
    for k in range(3):
        assert abs(doubled[:, k].mean()) < 1e-5
        assert abs(doubled[:, k].var() - 1.0) < 1e-3


def test_mult_gate_saturation(rng):
    y = rng.normal(size=(1, 2, 6, 6))
    z = rng.uniform(0.5, 1.5, size=(1, 3, 3, 3))
    w_mult = np.zeros((2, 3))
    w_mult[0] = 1e4  # positive preactivation everywhere -> gamma == 1
    params = FanUnitParams(w_mult=w_mult, w_add=np.zeros((2, 3)))
    out, _ = fan_forward(y, make_level(z, scale=2), params)
    std, _ = standardize_forward(y, params.eps)
    assert np.max(np.abs(out[:, 0] - std[:, 0])) < 1e-6
    assert np.max(np.abs(out[:, 1] - 0.5 * std[:, 1])) < 1e-6


def test_gate_ranges(rng):
    # moderate preactivations: float64 sigmoid rounds to exactly 1.0 past
    # ~37, which the saturation test covers separately
    for _ in range(5):
        y = rng.normal(size=(2, 3, 6, 6))
        z = rng.normal(size=(2, 4, 3, 3))
        params = FanUnitParams(w_mult=rng.normal(size=(3, 4)),
                               w_add=rng.normal(size=(3, 4)))
        _, cache = fan_forward(y, make_level(z, scale=2), params)
        assert np.all(cache.mult > 0.0) and np.all(cache.mult < 1.0)
        assert np.all(np.maximum(cache.pre_a, 0.0) >= 0.0)


def test_backward_zero_grad(rng):
    y = rng.normal(size=(1, 2, 4, 4))
    z = rng.normal(size=(1, 3, 2, 2))
    params = FanUnitParams(w_mult=rng.normal(size=(2, 3)),
                           w_add=rng.normal(size=(2, 3)))
    out, cache = fan_forward(y, make_level(z, scale=2), params)
    gy, gwm, gwa = fan_backward(np.zeros_like(out), cache)
    assert not np.any(gy) and not np.any(gwm) and not np.any(gwa)


def test_backward_requires_cache():
    with pytest.raises(ValueError, match="cache"):
        fan_backward(np.zeros((1, 2, 4, 4)), None)


def test_backward_finite_difference(rng):
    # cropped window: coverage starts at (1, 1), y at (0, 0)
    y = rng.normal(size=(2, 3, 5, 5))
    z = rng.normal(size=(2, 4, 2, 2))
    w_mult = rng.normal(size=(3, 4))
    w_add = rng.normal(size=(3, 4))
    level = make_level(z, crop_offset=(1, 1), scale=2)
    params = FanUnitParams(w_mult=w_mult, w_add=w_add)
    out, cache = fan_forward(y, level, params)
    assert cache.offset == (1, 1)
    assert out.shape == (2, 3, 4, 4)
    g_out = rng.normal(size=out.shape)
    gy, gwm, gwa = fan_backward(g_out, cache)

    def loss_y(yv):
        o, _ = fan_forward(yv, level, params)
        return float(np.sum(o * g_out))

    def loss_w(which):
        def f(wv):
            p = FanUnitParams(w_mult=wv if which == "m" else w_mult,
                              w_add=wv if which == "a" else w_add)
            o, _ = fan_forward(y, level, p)
            return float(np.sum(o * g_out))
        return f

    assert np.max(rel_err(gy, central_diff(loss_y, y))) < 1e-3
    assert np.max(rel_err(gwm[:, :, 0, 0], central_diff(loss_w("m"), w_mult))) < 1e-3
    assert np.max(rel_err(gwa[:, :, 0, 0], central_diff(loss_w("a"), w_add))) < 1e-3


def textbook_bn_backward(g, y, eps):
    # composed partial derivatives through mu and sigma^2, summed explicitly
    n, c, h, w = y.shape
    m = n * h * w
    mu = y.mean(axis=(0, 2, 3), keepdims=True)
    var = y.var(axis=(0, 2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    centered = y - mu
    d_var = np.sum(g * centered, axis=(0, 2, 3), keepdims=True) * (-0.5) * inv ** 3
    d_mu = (np.sum(g * -inv, axis=(0, 2, 3), keepdims=True)
            + d_var * np.sum(-2.0 * centered, axis=(0, 2, 3), keepdims=True) / m)
    return g * inv + d_var * 2.0 * centered / m + d_mu / m


def test_backward_reduces_to_bn_when_gates_fixed(rng):
    # sigmoid saturates to exactly 1.0 for huge preactivations, and zero
    # add weights keep beta identically 0, so only the standardization
    # path carries gradient
    y = rng.normal(size=(2, 3, 6, 6))
    z = rng.uniform(0.5, 1.5, size=(2, 4, 3, 3))
    params = FanUnitParams(w_mult=np.full((3, 4), 1e4), w_add=np.zeros((3, 4)))
    out, cache = fan_forward(y, make_level(z, scale=2), params)
    assert np.all(cache.mult == 1.0)
    g_out = rng.normal(size=out.shape)
    gy, gwm, gwa = fan_backward(g_out, cache)
    want = textbook_bn_backward(g_out, y, params.eps)
    assert np.max(np.abs(gy - want)) < 1e-8
    assert not np.any(gwm)  # sigmoid'(huge) underflows to zero
    assert not np.any(gwa)


def test_single_unit_stack_equals_forward(rng):
    y = rng.normal(size=(1, 3, 8, 8))
    z = rng.normal(size=(1, 4, 4, 4))
    level = make_level(z, scale=2)
    params = FanUnitParams(w_mult=rng.normal(size=(3, 4)),
                           w_add=rng.normal(size=(3, 4)))
    pyramid = FeaturePyramid(levels=[level], input_hw=(8, 8))
    got, offset = apply_stack(y, pyramid, FanStack(units=[params]))
    want, cache = fan_forward(y, level, params)
    assert np.array_equal(got, want)
    assert offset == cache.offset


def tiny_pyramid(rng, size=48):
    spec, weights = tiny_spec(0)
    x = rng.uniform(size=(2, 3, size, size)).astype(np.float32)
    return x, extract(x, spec, weights)


def test_stack_composition_oracle(rng):
    # all-zero gates turn every unit into 0.5 * standardize, so the stack
    # must equal three literal crop-then-standardize-then-halve passes
    x, pyramid = tiny_pyramid(rng)
    latent = 3
    units = []
    for level in reversed(pyramid.levels):
        zc = level.z.shape[1]
        units.append(FanUnitParams(w_mult=np.zeros((latent, zc)),
                                   w_add=np.zeros((latent, zc))))
    y = rng.normal(size=(2, latent, 48, 48))
    got, offset = apply_stack(y, pyramid, FanStack(units=units))

    eps = units[0].eps

    def std(a):
        mu = a.mean(axis=(0, 2, 3), keepdims=True)
        var = a.var(axis=(0, 2, 3), keepdims=True)
        return (a - mu) / np.sqrt(var + eps)

    deepest = pyramid.levels[-1]
    (r0, r1), (c0, c1) = deepest.coverage
    want = y[:, :, r0:r1, c0:c1]
    for _ in range(3):
        want = 0.5 * std(want)
    assert offset == (r0, c0)
    assert got.shape == want.shape
    assert np.max(np.abs(got - want)) < 1e-10


def test_stack_crop_bookkeeping(rng):
    x, pyramid = tiny_pyramid(rng)
    units = [FanUnitParams(w_mult=np.zeros((3, l.z.shape[1])),
                           w_add=np.zeros((3, l.z.shape[1])))
             for l in reversed(pyramid.levels)]
    y = rng.normal(size=(2, 3, 48, 48))
    out, offset = apply_stack(y, pyramid, FanStack(units=units))
    # total crop is set by the deepest level alone: every shallower level
    # covers a superset of its window
    assert offset == pyramid.levels[-1].crop_offset == (14, 14)
    assert out.shape[2:] == (20, 20)
    rows_lost = 48 - out.shape[2]
    assert rows_lost == 14 + (48 - 34)


def test_stack_count_mismatch(rng):
    x, pyramid = tiny_pyramid(rng)
    units = [FanUnitParams(w_mult=np.zeros((3, 8)), w_add=np.zeros((3, 8)))]
    y = rng.normal(size=(2, 3, 48, 48))
    with pytest.raises(ValueError, match="3 levels"):
        apply_stack(y, pyramid, FanStack(units=units))


def test_pixel_locality(rng):
    y = rng.normal(size=(1, 2, 8, 8))
    z = rng.normal(size=(1, 3, 4, 4))
    params = FanUnitParams(w_mult=rng.normal(size=(2, 3)),
                           w_add=rng.normal(size=(2, 3)))
    base, _ = fan_forward(y, make_level(z, scale=2), params)
    z2 = z.copy()
    z2[0, :, 1, 2] += 1.0
    bumped, _ = fan_forward(y, make_level(z2, scale=2), params)
    diff = np.abs(bumped - base).sum(axis=(0, 1))
    changed = diff > 0
    want = np.zeros((8, 8), dtype=bool)
    want[2:4, 4:6] = True
    assert np.array_equal(changed, want)


def test_misaligned_grids_error_names_both(rng):
    y = rng.normal(size=(1, 2, 4, 4))
    z = rng.normal(size=(1, 3, 2, 2))
    level = make_level(z, crop_offset=(10, 0), scale=1)
    params = FanUnitParams(w_mult=np.zeros((2, 3)), w_add=np.zeros((2, 3)))
    with pytest.raises(ShapeError) as err:
        fan_forward(y, level, params)
    msg = str(err.value)
    assert "[0, 4)" in msg and "[10, 12)" in msg


def test_channel_mismatches(rng):
    y = rng.normal(size=(1, 2, 4, 4))
    z = rng.normal(size=(1, 3, 2, 2))
    level = make_level(z, scale=2)
    with pytest.raises(ShapeError, match="channels"):
        fan_forward(y, level, FanUnitParams(w_mult=np.zeros((5, 3)),
                                            w_add=np.zeros((5, 3))))
    with pytest.raises(ShapeError, match="feature channels"):
        fan_forward(y, level, FanUnitParams(w_mult=np.zeros((2, 7)),
                                            w_add=np.zeros((2, 7))))


def test_determinism(rng):
    y = rng.normal(size=(2, 3, 6, 6))
    z = rng.normal(size=(2, 4, 3, 3))
    params = FanUnitParams(w_mult=rng.normal(size=(3, 4)),
                           w_add=rng.normal(size=(3, 4)))
    a, _ = fan_forward(y, make_level(z, scale=2), params)
    b, _ = fan_forward(y.copy(), make_level(z.copy(), scale=2), params)
    assert np.array_equal(a, b)


def test_params_validation():
    with pytest.raises(ShapeError, match="disagree"):
        FanUnitParams(w_mult=np.zeros((2, 3)), w_add=np.zeros((2, 4)))
    with pytest.raises(ValueError, match="eps"):
        FanUnitParams(w_mult=np.zeros((2, 3)), w_add=np.zeros((2, 3)), eps=0.0)
    p = FanUnitParams(w_mult=np.ones((2, 3)), w_add=np.ones((2, 3)))
    assert p.w_mult.shape == (2, 3, 1, 1)


def test_stack_validation():
    with pytest.raises(ValueError, match="at least one"):
        FanStack(units=[])

"""Kernel tests: brute-force forward oracles, finite-difference gradients,
and the edge rules (padding, ties, dtype preservation, error paths)."""

import numpy as np
import pytest
import scipy.special

from mrfusion import nn_core as nn
from mrfusion.nn_core import kernels

import gradcheck


# ---------------------------------------------------------------------------
# forward oracles
# ---------------------------------------------------------------------------

def conv2d_oracle(x, w, b, stride, padding):
    k = w.shape[0]
    pad = k // 2 if padding == "same" else 0
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    n, hp, wp, _ = xp.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    y = np.zeros((n, ho, wo, w.shape[3]), dtype=x.dtype)
    for ni in range(n):
        for i in range(ho):
            for j in range(wo):
                patch = xp[ni, i * stride:i * stride + k,
                           j * stride:j * stride + k, :]
                for f in range(w.shape[3]):
                    y[ni, i, j, f] = np.sum(patch * w[:, :, :, f]) + b[f]
    return y


def maxpool_oracle(x, window, stride):
    n, h, w, c = x.shape
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    y = np.zeros((n, ho, wo, c), dtype=x.dtype)
    for ni in range(n):
        for i in range(ho):
            for j in range(wo):
                patch = x[ni, i * stride:i * stride + window,
                          j * stride:j * stride + window, :]
                y[ni, i, j, :] = patch.max(axis=(0, 1))
    return y


@pytest.mark.parametrize("seed", range(8))
def test_conv2d_matches_bruteforce(seed):
    rng = np.random.default_rng(100 + seed)
    k = int(rng.choice([1, 3, 5]))
    stride = int(rng.integers(1, 3))
    padding = str(rng.choice(["same", "valid"]))
    h = int(rng.integers(k, k + 5))
    w_ = int(rng.integers(k, k + 5))
    c, f = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    x = rng.standard_normal((2, h, w_, c))
    w = rng.standard_normal((k, k, c, f))
    b = rng.standard_normal(f)
    got = nn.conv2d(x, w, b, stride, padding)
    want = conv2d_oracle(x, w, b, stride, padding)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_conv2d_same_padding_preserves_spatial_dims():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 9, 11, 2))
    for k in (1, 3, 7):
        w = rng.standard_normal((k, k, 2, 3))
        y = nn.conv2d(x, w, np.zeros(3), 1, "same")
        assert y.shape == (1, 9, 11, 3)


def test_conv2d_unbatched_input_round_trips():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((6, 6, 2))
    w = rng.standard_normal((3, 3, 2, 4))
    b = rng.standard_normal(4)
    y3 = nn.conv2d(x, w, b)
    y4 = nn.conv2d(x[None], w, b)
    assert y3.shape == (6, 6, 4)
    np.testing.assert_array_equal(y3, y4[0])
    # gradient path keeps the unbatched shape too
    y, cache = kernels._conv2d_with_cache(x, w, b)
    gx, _, _ = nn.conv2d_backward(np.ones_like(y), cache)
    assert gx.shape == x.shape


def test_conv2d_rejects_bad_geometry():
    x = np.zeros((1, 5, 5, 2))
    with pytest.raises(nn.DimensionError):
        nn.conv2d(x, np.zeros((2, 2, 2, 1)), np.zeros(1))  # even kernel
    with pytest.raises(nn.DimensionError):
        nn.conv2d(x, np.zeros((3, 3, 4, 1)), np.zeros(1))  # channel mismatch
    with pytest.raises(nn.DimensionError):
        nn.conv2d(x, np.zeros((7, 7, 2, 1)), np.zeros(1), 1, "valid")
    with pytest.raises(nn.DimensionError):
        nn.conv2d(x, np.zeros((3, 3, 2, 1)), np.zeros(1), stride=0)
    with pytest.raises(ValueError):
        nn.conv2d(x, np.zeros((3, 3, 2, 1)), np.zeros(1), 1, "full")


def test_conv2d_preserves_dtype():
    for dtype in (np.float32, np.float64):
        x = np.ones((1, 4, 4, 1), dtype=dtype)
        w = np.ones((3, 3, 1, 2), dtype=dtype)
        y = nn.conv2d(x, w, np.zeros(2, dtype=dtype))
        assert y.dtype == dtype


@pytest.mark.parametrize("seed", range(6))
def test_maxpool_matches_bruteforce(seed):
    rng = np.random.default_rng(200 + seed)
    window = int(rng.integers(2, 4))
    stride = int(rng.integers(1, window + 1))
    h = int(rng.integers(window, window + 6))
    w_ = int(rng.integers(window, window + 6))
    x = rng.standard_normal((2, h, w_, 3))
    got = nn.maxpool2d(x, window, stride)
    np.testing.assert_array_equal(got, maxpool_oracle(x, window, stride))


def test_maxpool_tiled_and_strided_paths_agree():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 8, 8, 4))
    y_fast, cache_fast = kernels._maxpool2d_with_cache(x, 2, 2)
    assert cache_fast[0] == "tiled"
    # force the general path with an equivalent sliding-window setup
    win = np.lib.stride_tricks.sliding_window_view(x, (2, 2), axis=(1, 2))
    y_ref = win[:, ::2, ::2].max(axis=(-2, -1))
    np.testing.assert_array_equal(y_fast, y_ref)
    grad = rng.standard_normal(y_fast.shape)
    gx_fast = nn.maxpool2d_backward(grad, cache_fast)
    # overlapping geometry exercises the scatter path on the same data
    y_slow, cache_slow = kernels._maxpool2d_with_cache(x, 2, 1)
    assert cache_slow[0] == "strided"
    assert y_slow.shape == (2, 7, 7, 4)
    assert gx_fast.shape == x.shape


@pytest.mark.parametrize("window,stride", [(2, 2), (2, 1)])
def test_maxpool_tie_routes_gradient_to_first_rowmajor_cell(window, stride):
    x = np.zeros((1, 4, 4, 1))  # every window fully tied
    y, cache = kernels._maxpool2d_with_cache(x, window, stride)
    gx = nn.maxpool2d_backward(np.ones_like(y), cache)
    ho = (4 - window) // stride + 1
    want = np.zeros((1, 4, 4, 1))
    for i in range(ho):
        for j in range(ho):
            want[0, i * stride, j * stride, 0] += 1.0
    np.testing.assert_array_equal(gx, want)


def test_global_maxpool_values_and_ties():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 5, 6, 2))
    np.testing.assert_array_equal(nn.global_maxpool(x), x.max(axis=(1, 2)))
    # all-tied plane: gradient goes to position (0, 0) only
    flat = np.ones((1, 3, 3, 1))
    y, cache = kernels._global_maxpool_with_cache(flat)
    gx = nn.global_maxpool_backward(np.full((1, 1), 7.0), cache)
    assert gx[0, 0, 0, 0] == 7.0
    assert gx.sum() == 7.0


def test_batchnorm_matches_twopass_oracle():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((4, 3, 5, 3))
    gamma = rng.uniform(0.5, 1.5, 3)
    beta = rng.standard_normal(3)
    eps = 1e-5
    y, mean, var, _ = nn.batchnorm_train(x, gamma, beta, eps)
    for c in range(3):
        vals = x[..., c].ravel()
        m = vals.sum() / vals.size
        v = ((vals - m) ** 2).sum() / vals.size  # biased variance
        np.testing.assert_allclose(mean[c], m, rtol=1e-12)
        np.testing.assert_allclose(var[c], v, rtol=1e-12)
        want = gamma[c] * (x[..., c] - m) / np.sqrt(v + eps) + beta[c]
        np.testing.assert_allclose(y[..., c], want, rtol=1e-10, atol=1e-12)


def test_batchnorm_normalizes_to_unit_stats():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((8, 4, 4, 2)) * 5 + 3
    y, _, _, _ = nn.batchnorm_train(x, np.ones(2), np.zeros(2))
    np.testing.assert_allclose(y.mean(axis=(0, 1, 2)), 0.0, atol=1e-10)
    np.testing.assert_allclose(y.var(axis=(0, 1, 2)), 1.0, atol=1e-3)


def test_batchnorm_rejects_tiny_batch():
    with pytest.raises(ValueError):
        nn.batchnorm_train(np.zeros((1, 2, 2, 1)), np.ones(1), np.zeros(1))
    with pytest.raises(nn.DimensionError):
        nn.batchnorm_train(np.zeros((2, 2, 1)), np.ones(1), np.zeros(1))


def test_batchnorm_infer_is_affine_in_running_stats():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 3, 3, 2))
    gamma, beta = np.array([2.0, 0.5]), np.array([1.0, -1.0])
    rm, rv = np.array([0.3, -0.2]), np.array([1.5, 0.7])
    y = nn.batchnorm_infer(x, gamma, beta, rm, rv, 1e-5)
    want = gamma * (x - rm) / np.sqrt(rv + 1e-5) + beta
    np.testing.assert_allclose(y, want, rtol=1e-12)


def test_dropout_train_mask_and_scale():
    rng = np.random.default_rng(8)
    x = np.ones((200, 50))
    rate = 0.4
    y = nn.dropout(x, rate, "train", rng)
    kept = y[y != 0]
    np.testing.assert_allclose(kept, 1.0 / (1.0 - rate))
    frac_zero = (y == 0).mean()
    assert abs(frac_zero - rate) < 0.03
    assert abs(y.mean() - 1.0) < 0.05  # inverted scaling preserves mean


def test_dropout_infer_and_zero_rate_are_identity():
    x = np.arange(12.0).reshape(3, 4)
    assert nn.dropout(x, 0.4, "infer") is x
    assert nn.dropout(x, 0.0, "train") is x


def test_dropout_error_paths():
    x = np.ones(4)
    with pytest.raises(ValueError):
        nn.dropout(x, 1.0, "train", np.random.default_rng(0))
    with pytest.raises(ValueError):
        nn.dropout(x, -0.1, "train", np.random.default_rng(0))
    with pytest.raises(ValueError):
        nn.dropout(x, 0.5, "train")  # no generator
    with pytest.raises(ValueError):
        nn.dropout(x, 0.5, "test", np.random.default_rng(0))


def test_softmax_crossentropy_matches_scipy():
    rng = np.random.default_rng(9)
    for _ in range(20):
        n = int(rng.integers(1, 7))
        classes = int(rng.integers(2, 9))
        logits = rng.standard_normal((n, classes)) * 10
        onehot = np.zeros((n, classes))
        labels = rng.integers(0, classes, n)
        onehot[np.arange(n), labels] = 1.0
        loss, probs = nn.softmax_crossentropy(logits, onehot)
        logp = scipy.special.log_softmax(logits, axis=1)
        want = -logp[np.arange(n), labels].mean()
        np.testing.assert_allclose(loss, want, rtol=1e-12)
        np.testing.assert_allclose(probs, scipy.special.softmax(logits, axis=1),
                                   rtol=1e-10, atol=1e-15)


def test_softmax_crossentropy_uniform_logits():
    # equal logits over 13 classes: every prob 1/13, loss = ln 13
    logits = np.full((3, 13), 0.7)
    onehot = np.zeros((3, 13))
    onehot[np.arange(3), [0, 5, 12]] = 1.0
    loss, probs = nn.softmax_crossentropy(logits, onehot)
    np.testing.assert_allclose(probs, 1.0 / 13.0, rtol=1e-12)
    np.testing.assert_allclose(loss, np.log(13.0), rtol=1e-12)


def test_softmax_crossentropy_is_stable_at_extreme_logits():
    logits = np.array([[1000.0, -1000.0], [-1000.0, 1000.0]])
    onehot = np.eye(2)
    loss, probs = nn.softmax_crossentropy(logits, onehot)
    assert np.isfinite(loss) and loss < 1e-6
    assert np.all(np.isfinite(probs))


def test_softmax_crossentropy_validates_labels():
    logits = np.zeros((2, 3))
    with pytest.raises(ValueError):
        nn.softmax_crossentropy(logits, np.full((2, 3), 0.5))
    with pytest.raises(nn.DimensionError):
        nn.softmax_crossentropy(logits, np.eye(3))
    with pytest.raises(nn.DimensionError):
        nn.softmax_crossentropy(np.zeros((2, 1)), np.ones((2, 1)))


def test_check_finite_raises_on_nan_and_inf():
    nn.check_finite(np.ones(3))
    with pytest.raises(nn.NumericError):
        nn.check_finite(np.array([1.0, np.nan]))
    with pytest.raises(nn.NumericError):
        nn.check_finite(np.array([np.inf]))


# ---------------------------------------------------------------------------
# finite-difference gradients (the acceptance suite runs 20 shapes per op;
# here a few per op keep the default test run fast)
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("op", sorted(gradcheck.ALL_CHECKS))
@pytest.mark.parametrize("seed", range(4))
def test_gradients_match_finite_differences(op, seed):
    rng = np.random.default_rng([seed, hash(op) % (2 ** 31)])
    err = gradcheck.ALL_CHECKS[op](rng)
    assert err < 1e-4, f"{op} seed {seed}: rel err {err:.3e}"

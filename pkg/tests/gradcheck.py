"""Finite-difference gradient checks shared by the kernel tests and the
acceptance suite.

Every check builds a random configuration in float64, compares the analytic
backward pass against central differences on a scalar projection of the
output, and returns the worst relative error it saw. Piecewise-linear ops
(max pooling) get inputs whose entries are pairwise separated by much more
than the probe step, so the argmax cannot flip under +-h.
"""

import numpy as np

from mrfusion import nn_core as nn

H = 1e-4


def rel_error(numeric, analytic):
    scale = max(np.linalg.norm(numeric.ravel()),
                np.linalg.norm(analytic.ravel()), 1e-12)
    return float(np.linalg.norm((numeric - analytic).ravel()) / scale)


def numeric_grad(f, x, h=H):
    """Central-difference gradient of the scalar function f with respect to
    x, perturbing x in place (f must read x afresh on every call)."""
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f()
        flat[i] = orig - h
        f_minus = f()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def separated(rng, shape, step=0.05):
    """Tensor whose entries are pairwise >= step apart, zero-centered."""
    n = int(np.prod(shape))
    vals = step * rng.permutation(n).astype(np.float64)
    return (vals - vals.mean()).reshape(shape)


def check_conv2d(rng):
    k = int(rng.choice([1, 3, 5, 7]))
    padding = str(rng.choice(["same", "valid"]))
    stride = int(rng.integers(1, 3))
    lo = k if padding == "valid" else 1
    n = int(rng.integers(1, 3))
    h = int(rng.integers(lo, lo + 4))
    w_ = int(rng.integers(lo, lo + 4))
    c = int(rng.integers(1, 4))
    f = int(rng.integers(1, 4))
    x = rng.standard_normal((n, h, w_, c))
    w = rng.standard_normal((k, k, c, f))
    b = rng.standard_normal(f)

    y, cache = nn.kernels._conv2d_with_cache(x, w, b, stride, padding)
    proj = rng.standard_normal(y.shape)
    gx, gw, gb = nn.conv2d_backward(proj, cache)

    def loss():
        return float((nn.conv2d(x, w, b, stride, padding) * proj).sum())

    worst = rel_error(numeric_grad(loss, x), gx)
    worst = max(worst, rel_error(numeric_grad(loss, w), gw))
    worst = max(worst, rel_error(numeric_grad(loss, b), gb))
    return worst


def check_relu(rng):
    shape = tuple(rng.integers(1, 6, size=int(rng.integers(1, 5))))
    x = rng.standard_normal(shape)
    x += 0.25 * np.sign(x)  # keep entries away from the kink at 0
    proj = rng.standard_normal(shape)
    analytic = nn.relu_backward(proj, x)

    def loss():
        return float((nn.relu(x) * proj).sum())

    return rel_error(numeric_grad(loss, x), analytic)


def check_maxpool(rng):
    window = int(rng.integers(2, 4))
    if rng.random() < 0.5:
        stride = window  # non-overlapping fast path
        ho = int(rng.integers(1, 4))
        wo = int(rng.integers(1, 4))
        h, w_ = ho * window, wo * window
    else:
        stride = int(rng.integers(1, window + 1))
        h = int(rng.integers(window, window + 5))
        w_ = int(rng.integers(window, window + 5))
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 4))
    x = separated(rng, (n, h, w_, c))

    y, cache = nn.kernels._maxpool2d_with_cache(x, window, stride)
    proj = rng.standard_normal(y.shape)
    analytic = nn.maxpool2d_backward(proj, cache)

    def loss():
        return float((nn.maxpool2d(x, window, stride) * proj).sum())

    return rel_error(numeric_grad(loss, x), analytic)


def check_global_maxpool(rng):
    n = int(rng.integers(1, 3))
    h = int(rng.integers(1, 6))
    w_ = int(rng.integers(1, 6))
    c = int(rng.integers(1, 5))
    x = separated(rng, (n, h, w_, c))

    y, cache = nn.kernels._global_maxpool_with_cache(x)
    proj = rng.standard_normal(y.shape)
    analytic = nn.global_maxpool_backward(proj, cache)

    def loss():
        return float((nn.global_maxpool(x) * proj).sum())

    return rel_error(numeric_grad(loss, x), analytic)


def check_batchnorm(rng):
    n = int(rng.integers(2, 5))
    h = int(rng.integers(1, 5))
    w_ = int(rng.integers(1, 5))
    c = int(rng.integers(1, 4))
    x = rng.standard_normal((n, h, w_, c))
    gamma = rng.uniform(0.5, 1.5, c)
    beta = rng.standard_normal(c)

    y, _, _, cache = nn.batchnorm_train(x, gamma, beta)
    proj = rng.standard_normal(y.shape)
    gx, gg, gb = nn.batchnorm_train_backward(proj, cache)

    def loss():
        out, _, _, _ = nn.batchnorm_train(x, gamma, beta)
        return float((out * proj).sum())

    worst = rel_error(numeric_grad(loss, x), gx)
    worst = max(worst, rel_error(numeric_grad(loss, gamma), gg))
    worst = max(worst, rel_error(numeric_grad(loss, beta), gb))
    return worst


def check_dropout(rng):
    shape = tuple(rng.integers(1, 6, size=int(rng.integers(1, 4))))
    rate = float(rng.choice([0.2, 0.4, 0.5]))
    seed = int(rng.integers(0, 2**31))
    x = rng.standard_normal(shape)

    _, mask = nn.kernels._dropout_with_cache(
        x, rate, "train", np.random.default_rng(seed))
    proj = rng.standard_normal(shape)
    analytic = nn.dropout_backward(proj, mask)

    def loss():
        # the mask depends only on the rng stream, so reseeding fixes it
        y = nn.dropout(x, rate, "train", np.random.default_rng(seed))
        return float((y * proj).sum())

    return rel_error(numeric_grad(loss, x), analytic)


def check_dense(rng):
    n = int(rng.integers(1, 5))
    din = int(rng.integers(1, 7))
    dout = int(rng.integers(1, 7))
    x = rng.standard_normal((n, din))
    w = rng.standard_normal((din, dout))
    b = rng.standard_normal(dout)

    proj = rng.standard_normal((n, dout))
    gx, gw, gb = nn.dense_backward(proj, x, w)

    def loss():
        return float((nn.dense(x, w, b) * proj).sum())

    worst = rel_error(numeric_grad(loss, x), gx)
    worst = max(worst, rel_error(numeric_grad(loss, w), gw))
    worst = max(worst, rel_error(numeric_grad(loss, b), gb))
    return worst


def check_softmax_crossentropy(rng):
    n = int(rng.integers(1, 6))
    classes = int(rng.integers(2, 8))
    logits = rng.standard_normal((n, classes)) * 3.0
    onehot = np.zeros((n, classes))
    onehot[np.arange(n), rng.integers(0, classes, n)] = 1.0

    _, probs = nn.softmax_crossentropy(logits, onehot)
    analytic = nn.softmax_crossentropy_backward(probs, onehot)

    def loss():
        value, _ = nn.softmax_crossentropy(logits, onehot)
        return value

    return rel_error(numeric_grad(loss, logits), analytic)


ALL_CHECKS = {
    "conv2d": check_conv2d,
    "relu": check_relu,
    "maxpool2d": check_maxpool,
    "global_maxpool": check_global_maxpool,
    "batchnorm": check_batchnorm,
    "dropout": check_dropout,
    "dense": check_dense,
    "softmax_crossentropy": check_softmax_crossentropy,
}

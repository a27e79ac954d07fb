"""Functional forward/backward kernels on numpy arrays.

All image tensors are channels-last: (N, H, W, C) batched or (H, W, C) for a
single sample. Kernels are dtype-preserving so the same code path runs in
float32 for training and float64 for finite-difference gradient checks.

Each `*_backward` consumes the cache returned by its forward counterpart and
returns gradients in the same order as the forward inputs.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class DimensionError(ValueError):
    """Shape or size constraint violated."""


class NumericError(FloatingPointError):
    """A kernel produced NaN or Inf."""


def check_finite(x, what="tensor"):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")
    return x


def _as_batch(x):
    """Promote (H, W, C) to (1, H, W, C); return (array, had_batch_dim)."""
    if x.ndim == 3:
        return x[None], False
    if x.ndim == 4:
        return x, True
    raise DimensionError(f"expected 3D or 4D input, got shape {x.shape}")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv2d(x, w, b, stride=1, padding="same"):
    """Cross-correlate x (N,H,W,C) with filters w (K,K,C,F), add bias b (F,).

    padding "same" keeps H,W when stride is 1 (zero padding of K//2);
    "valid" applies no padding. Returns y of shape (N,H',W',F).
    """
    y, _ = _conv2d_with_cache(x, w, b, stride, padding)
    return y


def _conv2d_with_cache(x, w, b, stride=1, padding="same"):
    x, batched = _as_batch(x)
    k = w.shape[0]
    if w.ndim != 4 or w.shape[1] != k:
        raise DimensionError(f"weights must be (K,K,C,F), got {w.shape}")
    if k % 2 == 0:
        raise DimensionError(f"kernel size must be odd, got {k}")
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")
    if w.shape[2] != x.shape[3]:
        raise DimensionError(
            f"input has {x.shape[3]} channels, weights expect {w.shape[2]}")
    if padding not in ("same", "valid"):
        raise ValueError(f"unknown padding mode {padding!r}")

    n, h, wd, c = x.shape
    f = w.shape[3]
    pad = k // 2 if padding == "same" else 0
    if h + 2 * pad < k or wd + 2 * pad < k:
        raise DimensionError(f"kernel {k} larger than padded input {x.shape}")

    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    # (N, Ho, Wo, C, K, K) view -> (N, Ho, Wo, K, K, C) contiguous copy
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
    cols = cols.reshape(n * ho * wo, k * k * c)

    y = cols @ w.reshape(k * k * c, f)
    y += b
    y = y.reshape(n, ho, wo, f)
    cache = (cols, x.shape, w, stride, pad, batched)
    return (y if batched else y[0]), cache


def conv2d_backward(grad_y, cache):
    """Gradients of conv2d: returns (grad_x, grad_w, grad_b)."""
    cols, x_shape, w, stride, pad, batched = cache
    if not batched:
        grad_y = grad_y[None]
    n, h, wd, c = x_shape
    k, _, _, f = w.shape
    _, ho, wo, _ = grad_y.shape

    gy = grad_y.reshape(n * ho * wo, f)
    grad_b = gy.sum(axis=0)
    grad_w = (cols.T @ gy).reshape(k, k, c, f)

    grad_cols = gy @ w.reshape(k * k * c, f).T
    grad_patches = grad_cols.reshape(n, ho, wo, k, k, c)
    grad_xp = np.zeros((n, h + 2 * pad, wd + 2 * pad, c), dtype=grad_y.dtype)
    for dy in range(k):
        ys = slice(dy, dy + stride * (ho - 1) + 1, stride)
        for dx in range(k):
            xs = slice(dx, dx + stride * (wo - 1) + 1, stride)
            grad_xp[:, ys, xs, :] += grad_patches[:, :, :, dy, dx, :]
    grad_x = grad_xp[:, pad:pad + h, pad:pad + wd, :] if pad else grad_xp
    return (grad_x if batched else grad_x[0]), grad_w, grad_b


# ---------------------------------------------------------------------------
# elementwise and pooling
# ---------------------------------------------------------------------------

def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_y, x):
    return grad_y * (x > 0)


def maxpool2d(x, window, stride):
    y, _ = _maxpool2d_with_cache(x, window, stride)
    return y


def _maxpool2d_with_cache(x, window, stride):
    """Per-channel max over window x window patches.

    The fast path requires the non-overlapping layout the models use
    (window == stride, spatial dims divisible); a strided-view fallback
    covers other geometries. Ties resolve to the first cell in row-major
    window order.
    """
    x, batched = _as_batch(x)
    n, h, w, c = x.shape
    if window > h or window > w:
        raise DimensionError(f"pool window {window} larger than input {x.shape}")
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")

    if window == stride and h % window == 0 and w % window == 0:
        ho, wo = h // window, w // window
        tiles = x.reshape(n, ho, window, wo, window, c)
        tiles = tiles.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, window * window)
        idx = tiles.argmax(axis=-1)
        y = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
        cache = ("tiled", x.shape, window, stride, idx, batched)
    else:
        win = sliding_window_view(x, (window, window), axis=(1, 2))[:, ::stride, ::stride]
        ho, wo = win.shape[1], win.shape[2]
        flat = win.reshape(n, ho, wo, c, window * window)
        idx = flat.argmax(axis=-1)
        y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        cache = ("strided", x.shape, window, stride, idx, batched)
    return (y if batched else y[0]), cache


def maxpool2d_backward(grad_y, cache):
    kind, x_shape, window, stride, idx, batched = cache
    if not batched:
        grad_y = grad_y[None]
    n, h, w, c = x_shape
    ho, wo = idx.shape[1], idx.shape[2]
    grad_x = np.zeros(x_shape, dtype=grad_y.dtype)

    if kind == "tiled":
        tiles = np.zeros((n, ho, wo, c, window * window), dtype=grad_y.dtype)
        np.put_along_axis(tiles, idx[..., None], grad_y[..., None], axis=-1)
        tiles = tiles.reshape(n, ho, wo, c, window, window).transpose(0, 1, 4, 2, 5, 3)
        grad_x[:] = tiles.reshape(n, h, w, c)
    else:
        dy_off, dx_off = idx // window, idx % window
        oy = (np.arange(ho) * stride)[None, :, None, None]
        ox = (np.arange(wo) * stride)[None, None, :, None]
        ni = np.arange(n)[:, None, None, None]
        ci = np.arange(c)[None, None, None, :]
        ni, yi, xi, ci = np.broadcast_arrays(ni, oy + dy_off, ox + dx_off, ci)
        np.add.at(grad_x, (ni.ravel(), yi.ravel(), xi.ravel(), ci.ravel()),
                  grad_y.ravel())
    return grad_x if batched else grad_x[0]


def global_maxpool(x):
    y, _ = _global_maxpool_with_cache(x)
    return y


def _global_maxpool_with_cache(x):
    """Collapse (N,H,W,C) to a per-channel maximum (N,C)."""
    x, batched = _as_batch(x)
    n, h, w, c = x.shape
    flat = x.reshape(n, h * w, c)
    idx = flat.argmax(axis=1)
    y = np.take_along_axis(flat, idx[:, None, :], axis=1)[:, 0, :]
    return (y if batched else y[0]), (x.shape, idx, batched)


def global_maxpool_backward(grad_y, cache):
    x_shape, idx, batched = cache
    if not batched:
        grad_y = grad_y[None]
    n, h, w, c = x_shape
    flat = np.zeros((n, h * w, c), dtype=grad_y.dtype)
    np.put_along_axis(flat, idx[:, None, :], grad_y[:, None, :], axis=1)
    grad_x = flat.reshape(x_shape)
    return grad_x if batched else grad_x[0]


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

def batchnorm_train(x, gamma, beta, eps=1e-5):
    """Normalize per channel over batch and spatial axes using batch stats.

    x is (N,H,W,C) with N >= 2. Returns (y, batch_mean, batch_var, cache);
    the caller owns the running-statistic update.
    """
    if x.ndim != 4:
        raise DimensionError(f"batchnorm expects (N,H,W,C), got {x.shape}")
    if x.shape[0] < 2:
        raise ValueError("batchnorm in train mode needs batch size >= 2")
    axes = (0, 1, 2)
    mean = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    y = gamma * xhat + beta
    cache = (xhat, inv_std.astype(x.dtype), gamma)
    return y, mean, var, cache


def batchnorm_train_backward(grad_y, cache):
    """Returns (grad_x, grad_gamma, grad_beta)."""
    xhat, inv_std, gamma = cache
    axes = (0, 1, 2)
    m = xhat.shape[0] * xhat.shape[1] * xhat.shape[2]
    grad_beta = grad_y.sum(axis=axes)
    grad_gamma = (grad_y * xhat).sum(axis=axes)
    gxh = grad_y * gamma
    grad_x = (inv_std / m) * (
        m * gxh - gxh.sum(axis=axes) - xhat * (gxh * xhat).sum(axis=axes))
    return grad_x, grad_gamma, grad_beta


def batchnorm_infer(x, gamma, beta, running_mean, running_var, eps=1e-5):
    scale = gamma / np.sqrt(running_var + eps)
    return x * scale + (beta - running_mean * scale)


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def dropout(x, rate, mode, rng=None):
    """Inverted dropout: train zeroes with probability `rate` and rescales
    survivors by 1/(1-rate); inference is the identity."""
    y, _ = _dropout_with_cache(x, rate, mode, rng)
    return y


def _dropout_with_cache(x, rate, mode, rng=None):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "infer" or rate == 0.0:
        return x, None
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs a seeded generator")
    keep = (rng.random(x.shape) >= rate)
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    mask = keep.astype(x.dtype) * scale
    return x * mask, mask


def dropout_backward(grad_y, mask):
    return grad_y if mask is None else grad_y * mask


# ---------------------------------------------------------------------------
# dense and loss
# ---------------------------------------------------------------------------

def dense(x, w, b):
    """x (N,Din) @ w (Din,Dout) + b (Dout,)."""
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(
            f"dense input width {x.shape[-1]} != weight rows {w.shape[0]}")
    return x @ w + b


def dense_backward(grad_y, x, w):
    grad_x = grad_y @ w.T
    grad_w = x.T @ grad_y
    grad_b = grad_y.sum(axis=0)
    return grad_x, grad_w, grad_b


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_crossentropy(logits, labels_onehot):
    """Mean categorical cross-entropy with max-subtracted softmax.

    logits and labels are (batch, L); labels must be exactly one-hot.
    Returns (loss, probs). The gradient wrt logits is (probs - labels)/batch.
    """
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise DimensionError(f"logits must be (batch, L>=2), got {logits.shape}")
    if labels_onehot.shape != logits.shape:
        raise DimensionError(
            f"labels shape {labels_onehot.shape} != logits shape {logits.shape}")
    rows = labels_onehot.sum(axis=1)
    if not (np.all(np.abs(rows - 1.0) < 1e-6)
            and np.all((labels_onehot == 0) | (labels_onehot == 1))):
        raise ValueError("labels must be one-hot rows")

    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    loss = float(-(labels_onehot * logp).sum() / logits.shape[0])
    probs = np.exp(logp)
    check_finite(probs, "softmax probabilities")
    return loss, probs


def softmax_crossentropy_backward(probs, labels_onehot):
    return (probs - labels_onehot) / probs.shape[0]

"""Layer objects: parameter registration plus tape-recorded forward passes.

Layers are thin wrappers over the functional kernels. Each takes and returns
a tape Node; pass tape=None for inference (no caches retained, nothing
recorded). Parameterized layers register their arrays on a ParamSet under
"<name>/<field>" and fetch them by name at call time, so an optimizer update
is visible on the next forward with no rebinding.
"""

import numpy as np

from . import kernels as K
from .tape import Node, untracked


def he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D:
    """stride-1 'same' convolution by default; odd kernels only."""

    def __init__(self, name, kernel, in_channels, filters,
                 stride=1, padding="same"):
        self.name = name
        self.kernel = kernel
        self.in_channels = in_channels
        self.filters = filters
        self.stride = stride
        self.padding = padding

    def register(self, params, rng, dtype=np.float32):
        k, c, f = self.kernel, self.in_channels, self.filters
        params.add(self.name + "/w",
                   he_uniform(rng, (k, k, c, f), k * k * c, dtype))
        params.add(self.name + "/b", np.zeros(f, dtype=dtype))

    def forward(self, x, params, mode, tape=None, rng=None):
        w = params.values[self.name + "/w"]
        b = params.values[self.name + "/b"]
        y, cache = K._conv2d_with_cache(x.value, w, b, self.stride, self.padding)
        if tape is None:
            return untracked(y)
        out = tape.node(y)

        def backward_fn(grad_y, cache=cache):
            return K.conv2d_backward(grad_y, cache)

        tape.record(out.ref, (x.ref, self.name + "/w", self.name + "/b"),
                    backward_fn)
        return out


class ReLU:
    def register(self, params, rng, dtype=np.float32):
        pass

    def forward(self, x, params, mode, tape=None, rng=None):
        y = K.relu(x.value)
        if tape is None:
            return untracked(y)
        out = tape.node(y)
        xv = x.value
        tape.record(out.ref, (x.ref,),
                    lambda grad_y: (K.relu_backward(grad_y, xv),))
        return out


class BatchNorm:
    """Per-channel normalization; batch stats in train mode, running stats
    (momentum 0.9) at inference."""

    def __init__(self, name, channels, eps=1e-5, momentum=0.9):
        self.name = name
        self.channels = channels
        self.eps = eps
        self.momentum = momentum

    def register(self, params, rng, dtype=np.float32):
        c = self.channels
        params.add(self.name + "/gamma", np.ones(c, dtype=dtype))
        params.add(self.name + "/beta", np.zeros(c, dtype=dtype))
        params.add(self.name + "/running_mean", np.zeros(c, dtype=dtype),
                   trainable=False)
        params.add(self.name + "/running_var", np.ones(c, dtype=dtype),
                   trainable=False)

    def forward(self, x, params, mode, tape=None, rng=None):
        gamma = params.values[self.name + "/gamma"]
        beta = params.values[self.name + "/beta"]
        if mode == "infer":
            y = K.batchnorm_infer(
                x.value, gamma, beta,
                params.values[self.name + "/running_mean"],
                params.values[self.name + "/running_var"], self.eps)
            return untracked(y) if tape is None else tape.node(y)
        y, mean, var, cache = K.batchnorm_train(x.value, gamma, beta, self.eps)
        rm = params.values[self.name + "/running_mean"]
        rv = params.values[self.name + "/running_var"]
        m = self.momentum
        rm *= m
        rm += (1.0 - m) * mean.astype(rm.dtype)
        rv *= m
        rv += (1.0 - m) * var.astype(rv.dtype)
        if tape is None:
            return untracked(y)
        out = tape.node(y)

        def backward_fn(grad_y, cache=cache):
            return K.batchnorm_train_backward(grad_y, cache)

        tape.record(out.ref,
                    (x.ref, self.name + "/gamma", self.name + "/beta"),
                    backward_fn)
        return out


class MaxPool:
    def __init__(self, window=2, stride=2):
        self.window = window
        self.stride = stride

    def register(self, params, rng, dtype=np.float32):
        pass

    def forward(self, x, params, mode, tape=None, rng=None):
        y, cache = K._maxpool2d_with_cache(x.value, self.window, self.stride)
        if tape is None:
            return untracked(y)
        out = tape.node(y)
        tape.record(out.ref, (x.ref,),
                    lambda grad_y, cache=cache: (K.maxpool2d_backward(grad_y, cache),))
        return out


class GlobalMaxPool:
    def register(self, params, rng, dtype=np.float32):
        pass

    def forward(self, x, params, mode, tape=None, rng=None):
        y, cache = K._global_maxpool_with_cache(x.value)
        if tape is None:
            return untracked(y)
        out = tape.node(y)
        tape.record(out.ref, (x.ref,),
                    lambda grad_y, cache=cache: (K.global_maxpool_backward(grad_y, cache),))
        return out


class Dropout:
    def __init__(self, rate):
        self.rate = rate

    def register(self, params, rng, dtype=np.float32):
        pass

    def forward(self, x, params, mode, tape=None, rng=None):
        y, mask = K._dropout_with_cache(x.value, self.rate, mode, rng)
        if tape is None:
            return untracked(y)
        out = tape.node(y)
        tape.record(out.ref, (x.ref,),
                    lambda grad_y, mask=mask: (K.dropout_backward(grad_y, mask),))
        return out


class Dense:
    def __init__(self, name, in_features, out_features):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features

    def register(self, params, rng, dtype=np.float32):
        din, dout = self.in_features, self.out_features
        params.add(self.name + "/w", he_uniform(rng, (din, dout), din, dtype))
        params.add(self.name + "/b", np.zeros(dout, dtype=dtype))

    def forward(self, x, params, mode, tape=None, rng=None):
        w = params.values[self.name + "/w"]
        b = params.values[self.name + "/b"]
        y = K.dense(x.value, w, b)
        if tape is None:
            return untracked(y)
        out = tape.node(y)
        xv = x.value

        def backward_fn(grad_y):
            return K.dense_backward(grad_y, xv, w)

        tape.record(out.ref, (x.ref, self.name + "/w", self.name + "/b"),
                    backward_fn)
        return out


def run_layers(layers, x, params, mode, tape=None, rng=None):
    for layer in layers:
        x = layer.forward(x, params, mode, tape, rng)
    return x


def crossentropy(logits_node, labels_onehot, tape=None):
    """Mean softmax cross-entropy as a recorded scalar op.

    Returns (loss, probs, loss_node); loss_node is None without a tape.
    """
    loss, probs = K.softmax_crossentropy(logits_node.value, labels_onehot)
    if tape is None:
        return loss, probs, None
    loss_node = tape.node(np.asarray(loss, dtype=logits_node.value.dtype))

    def backward_fn(grad_out):
        return (grad_out * K.softmax_crossentropy_backward(probs, labels_onehot),)

    tape.record(loss_node.ref, (logits_node.ref,), backward_fn)
    return loss, probs, loss_node

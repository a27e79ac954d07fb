"""From-scratch neural network core: numpy kernels, a reverse-mode gradient
tape, layer objects, parameter storage with binary checkpoints, and Adam."""

from .kernels import (
    DimensionError,
    NumericError,
    batchnorm_infer,
    batchnorm_train,
    batchnorm_train_backward,
    check_finite,
    conv2d,
    conv2d_backward,
    dense,
    dense_backward,
    dropout,
    dropout_backward,
    global_maxpool,
    global_maxpool_backward,
    maxpool2d,
    maxpool2d_backward,
    relu,
    relu_backward,
    softmax,
    softmax_crossentropy,
    softmax_crossentropy_backward,
)
from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    GlobalMaxPool,
    MaxPool,
    ReLU,
    crossentropy,
    he_uniform,
    run_layers,
)
from .optim import adam_step
from .params import CheckpointError, ParamSet, read_checkpoint
from .tape import GradientTape, Node, concat, untracked

__all__ = [
    "DimensionError", "NumericError", "batchnorm_infer", "batchnorm_train",
    "batchnorm_train_backward", "check_finite", "conv2d", "conv2d_backward",
    "dense", "dense_backward", "dropout", "dropout_backward",
    "global_maxpool", "global_maxpool_backward", "maxpool2d",
    "maxpool2d_backward", "relu", "relu_backward", "softmax",
    "softmax_crossentropy", "softmax_crossentropy_backward",
    "BatchNorm", "Conv2D", "Dense", "Dropout", "GlobalMaxPool", "MaxPool",
    "ReLU", "crossentropy", "he_uniform", "run_layers", "adam_step",
    "CheckpointError", "ParamSet", "read_checkpoint",
    "GradientTape", "Node", "concat", "untracked",
]

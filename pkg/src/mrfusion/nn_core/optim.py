"""Adam optimizer acting in place on a ParamSet."""

import numpy as np


def adam_step(params, grads, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update over all trainable parameters.

    Moment buffers and the shared step counter live on the ParamSet, so a
    checkpoint with optimizer state resumes mid-schedule.
    """
    params.step += 1
    t = params.step
    corr1 = 1.0 - beta1 ** t
    corr2 = 1.0 - beta2 ** t
    for name in params.trainable:
        g = grads[name]
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        step_size = lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
        params.values[name] -= step_size

"""Dual-resolution patch classifier: a two-branch convolutional network that
consumes panchromatic and multispectral imagery at their native resolutions,
built on from-scratch numpy kernels, plus the data pipeline, training loop,
evaluation metrics, and a random-forest learner that runs on its features."""

__version__ = "0.1.0"

"""Synthetic paired-scene generator with controlled class structure.

Classes come in twin pairs so that neither imaging modality suffices alone:
an even-indexed pair shares its band spectrum and differs only in high-res
texture ("spectral twins"), an odd-indexed pair shares texture and differs
only in spectrum ("texture twins").  A model must fuse both inputs to
separate every class.

Texture identity is carried by sinusoid frequency, which survives rotation
and flipping; orientation and phase are randomized per object so they carry
no class information.  High-res brightness has mean 0.5 for every class, so
the single band alone cannot mimic the spectra.  Objects are axis-aligned
rectangles on a jittered cell grid, each large enough to contain at least
one aligned sample anchor.
"""

import numpy as np

from .patches import RasterPair, SceneError

_MIN_CELL = 16
_MAX_CELL = 34
_NOISE = 0.02
_AMP = 0.33
_BACKGROUND = 0.5


def _class_design(num_classes):
    """Per-class (spectrum index, texture index); twins share one index."""
    table = []
    spec = tex = 0

    def new_spec():
        nonlocal spec
        spec += 1
        return spec - 1

    def new_tex():
        nonlocal tex
        tex += 1
        return tex - 1

    for j in range(num_classes // 2):
        if j % 2 == 0:
            shared = new_spec()
            table.append((shared, new_tex()))
            table.append((shared, new_tex()))
        else:
            shared = new_tex()
            table.append((new_spec(), shared))
            table.append((new_spec(), shared))
    if num_classes % 2:
        shared = table[0][0] if table else new_spec()
        table.append((shared, new_tex()))
    return table, spec, tex


def _spectra(n, bands, rng):
    """n band vectors in [0.2, 0.8], pairwise well separated."""
    floor = 0.25
    while True:
        for _ in range(200):
            cand = rng.uniform(0.2, 0.8, size=(n, bands))
            gap = np.abs(cand[:, None, :] - cand[None, :, :]).max(axis=2)
            gap[np.arange(n), np.arange(n)] = 1.0
            if gap.min() >= floor:
                return cand
        floor *= 0.8


def _frequencies(n):
    """n sinusoid frequencies (cycles/pixel), log-spaced and far apart."""
    if n == 1:
        return np.array([0.2])
    return np.geomspace(1.0 / 13.0, 0.45, n)


def synth_generate(num_classes, objects_per_class, scene_size,
                   ratio=4, bands=4, seed=0, margin=16):
    """Build one paired scene; returns (RasterPair, class name list).

    ``margin`` keeps a clear border so windows up to side 2*margin fit
    around any object pixel.  Raises SceneError when the requested object
    count cannot be placed.
    """
    if num_classes < 1 or objects_per_class < 1:
        raise SceneError("need at least one class and one object per class")
    if bands < 1 or ratio < 1:
        raise SceneError(f"bad ratio/bands: {ratio}/{bands}")
    if scene_size % ratio:
        raise SceneError(f"scene size {scene_size} not divisible by {ratio}")
    n_objects = num_classes * objects_per_class
    usable = scene_size - 2 * margin
    cell = _MAX_CELL
    while cell > _MIN_CELL and (usable // cell) ** 2 < n_objects:
        cell -= 2
    if (usable // cell) ** 2 < n_objects:
        raise SceneError(
            f"scene of {scene_size} px cannot hold {n_objects} objects")
    per_side = usable // cell

    table, n_spec, n_tex = _class_design(num_classes)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2026]))
    spectra = _spectra(n_spec, bands, rng)
    freqs = _frequencies(n_tex)

    pan = np.full((scene_size, scene_size), _BACKGROUND, dtype=np.float64)
    field = np.full((scene_size, scene_size, bands), _BACKGROUND,
                    dtype=np.float64)
    labels = np.zeros((scene_size, scene_size), dtype=np.int32)
    objects = np.zeros((scene_size, scene_size), dtype=np.int32)

    cells = rng.permutation(per_side * per_side)[:n_objects]
    size_lo, size_hi = max(ratio + 2, 10), cell - 2
    yy, xx = np.mgrid[0:scene_size, 0:scene_size]
    for idx in range(n_objects):
        klass = idx % num_classes
        spec_idx, tex_idx = table[klass]
        cy, cx = divmod(int(cells[idx]), per_side)
        h = int(rng.integers(size_lo, size_hi + 1))
        w = int(rng.integers(size_lo, size_hi + 1))
        oy = margin + cy * cell + int(rng.integers(0, cell - h + 1))
        ox = margin + cx * cell + int(rng.integers(0, cell - w + 1))
        theta = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        f = freqs[tex_idx]
        ys, xs = slice(oy, oy + h), slice(ox, ox + w)
        wave = 2.0 * np.pi * f * (np.cos(theta) * xx[ys, xs]
                                  + np.sin(theta) * yy[ys, xs])
        pan[ys, xs] = _BACKGROUND + _AMP * np.sin(wave + phase)
        field[ys, xs] = spectra[spec_idx]
        labels[ys, xs] = klass + 1
        objects[ys, xs] = idx + 1

    pan += rng.normal(0.0, _NOISE, pan.shape)
    np.clip(pan, 0.0, 1.0, out=pan)
    ms_side = scene_size // ratio
    ms = field.reshape(ms_side, ratio, ms_side, ratio, bands).mean(axis=(1, 3))
    ms += rng.normal(0.0, _NOISE, ms.shape)
    np.clip(ms, 0.0, 1.0, out=ms)

    pan = pan[:, :, None].astype(np.float32)
    ms = ms.astype(np.float32)
    scene = RasterPair(pan=pan, ms=ms, ratio=ratio, labels=labels,
                       objects=objects, fused=fuse_product(pan, ms, ratio))
    names = [f"c{k + 1:02d}_s{s}t{t}" for k, (s, t) in enumerate(table)]
    return scene, names


def fuse_product(pan, ms, ratio):
    """Naive high-res multiband product for single-branch baselines.

    Nearest-upsampled low-res bands modulated by the ratio of the high-res
    band to its local block mean, so band proportions come from the low-res
    image and spatial detail from the high-res one.
    """
    pan = np.asarray(pan, dtype=np.float64)
    if pan.ndim == 3:
        pan = pan[:, :, 0]
    h, w = pan.shape
    block = pan.reshape(h // ratio, ratio, w // ratio, ratio).mean(axis=(1, 3))
    block = np.repeat(np.repeat(block, ratio, axis=0), ratio, axis=1)
    detail = pan / np.maximum(block, 1e-6)
    up = np.repeat(np.repeat(np.asarray(ms, np.float64), ratio, axis=0),
                   ratio, axis=1)
    return np.clip(up * detail[:, :, None], 0.0, 4.0).astype(np.float32)

"""Paired geometric augmentation.

Six square-symmetry transforms (three rotations, two axis flips, the main
transpose) applied identically to both windows of a sample.  Together with
the identity and the anti-transpose they form the full 8-element symmetry
group of the square, so composing any two named transforms lands back in
that group; labels and object ids are untouched.
"""

import numpy as np

from .patches import PatchPair


def _rot90(a):
    return np.rot90(a, 1, axes=(0, 1))


def _rot180(a):
    return np.rot90(a, 2, axes=(0, 1))


def _rot270(a):
    return np.rot90(a, 3, axes=(0, 1))


def _hflip(a):
    return a[:, ::-1]


def _vflip(a):
    return a[::-1, :]


def _transpose(a):
    return np.swapaxes(a, 0, 1)


def _antitranspose(a):
    return np.swapaxes(a[::-1, ::-1], 0, 1)


TRANSFORMS = {
    "rot90": _rot90,
    "rot180": _rot180,
    "rot270": _rot270,
    "hflip": _hflip,
    "vflip": _vflip,
    "transpose": _transpose,
}

# Full group, for closure checks: every composition of TRANSFORMS entries
# equals exactly one of these.
DIHEDRAL = dict(TRANSFORMS)
DIHEDRAL["identity"] = lambda a: a
DIHEDRAL["antitranspose"] = _antitranspose


def augment(sample, transform):
    """Apply one named transform to both windows; returns a new sample."""
    try:
        fn = TRANSFORMS[transform]
    except KeyError:
        raise ValueError(
            f"unknown transform {transform!r}; "
            f"choose from {sorted(TRANSFORMS)}") from None
    fused = sample.fused_patch
    return PatchPair(
        pan_patch=np.ascontiguousarray(fn(sample.pan_patch)),
        ms_patch=np.ascontiguousarray(fn(sample.ms_patch)),
        label=sample.label,
        object_id=sample.object_id,
        anchor=sample.anchor,
        fused_patch=None if fused is None else np.ascontiguousarray(fn(fused)))


def build_training_set(samples, seed=0):
    """Expand a training list to exactly 3x its size.

    Each sample is kept and followed by two copies under distinct transforms
    drawn without replacement by a generator seeded from ``seed``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    names = sorted(TRANSFORMS)
    out = []
    for sample in samples:
        picks = rng.choice(len(names), size=2, replace=False)
        out.append(sample)
        out.extend(augment(sample, names[int(p)]) for p in picks)
    return out

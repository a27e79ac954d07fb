"""Co-registered scene container and patch extraction.

A scene couples a high-resolution single-band image with a low-resolution
multiband image at an integer resolution ratio r, plus per-pixel label and
object-id maps at the high resolution.  A classification sample is anchored
at a labeled high-res pixel (x, y): the sample pairs the d x d window
centered there with the corresponding (d/r) x (d/r) low-res window, which
requires the window origin to sit on the r-lattice.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class AlignmentError(ValueError):
    pass


class BoundsError(ValueError):
    pass


class LabelError(ValueError):
    pass


class SceneError(ValueError):
    pass


def band_range(raster):
    """Per-band (min, max) as float64 arrays."""
    arr = np.asarray(raster, dtype=np.float64)
    return arr.min(axis=(0, 1)), arr.max(axis=(0, 1))


def normalize(raster, stats=None):
    """Scale each band to [0, 1] using its own min/max.

    Returns (normalized float32 array, (mins, maxs)).  Pass ``stats`` to
    reuse ranges computed elsewhere (e.g. training-scene ranges applied to a
    prediction scene).  A constant band has no range; it maps to all zeros
    and raises a UserWarning.
    """
    arr = np.asarray(raster, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    mins, maxs = band_range(arr) if stats is None else stats
    spread = np.asarray(maxs, dtype=np.float64) - np.asarray(mins, np.float64)
    flat = spread <= 0
    if flat.any():
        warnings.warn(
            f"constant band(s) {np.nonzero(flat)[0].tolist()} mapped to 0")
    out = (arr - mins) / np.where(flat, 1.0, spread)
    out[:, :, flat] = 0.0
    return np.clip(out, 0.0, 1.0).astype(np.float32), (mins, maxs)


@dataclass
class RasterPair:
    """One scene: aligned high-res/low-res imagery plus label/object maps.

    pan: (H, W, 1) float32; ms: (H/r, W/r, c) float32; labels and objects:
    (H, W) int32 with 0 meaning unlabeled/no object.  ``fused`` optionally
    carries a high-res c-band product for single-branch baselines.
    """

    pan: np.ndarray
    ms: np.ndarray
    ratio: int
    labels: np.ndarray
    objects: np.ndarray
    fused: Optional[np.ndarray] = None
    band_stats: dict = field(default_factory=dict)

    def __post_init__(self):
        pan, ms = np.asarray(self.pan), np.asarray(self.ms)
        if pan.ndim == 2:
            pan = pan[:, :, None]
        if pan.ndim != 3 or pan.shape[2] != 1:
            raise SceneError(f"high-res image must be (H, W, 1), got {pan.shape}")
        if ms.ndim != 3:
            raise SceneError(f"low-res image must be (H/r, W/r, c), got {ms.shape}")
        r = int(self.ratio)
        if r < 1:
            raise SceneError(f"resolution ratio must be >= 1, got {self.ratio}")
        h, w = pan.shape[:2]
        if h % r or w % r:
            raise SceneError(f"scene {h}x{w} not divisible by ratio {r}")
        if ms.shape[:2] != (h // r, w // r):
            raise SceneError(
                f"low-res shape {ms.shape[:2]} != expected {(h // r, w // r)}")
        labels = np.asarray(self.labels, dtype=np.int32)
        objects = np.asarray(self.objects, dtype=np.int32)
        if labels.shape != (h, w) or objects.shape != (h, w):
            raise SceneError("label/object maps must match high-res extent")
        if (labels < 0).any() or (objects < 0).any():
            raise SceneError("label/object ids must be >= 0")
        if (objects[labels > 0] == 0).any():
            raise SceneError("labeled pixel without object id")
        marked = objects > 0
        if marked.any():
            pairs = np.unique(
                np.stack([objects[marked], labels[marked]], axis=1), axis=0)
            ids, counts = np.unique(pairs[:, 0], return_counts=True)
            if (counts > 1).any():
                bad = int(ids[counts > 1][0])
                raise SceneError(f"object {bad} spans multiple labels")
        if self.fused is not None:
            fused = np.asarray(self.fused)
            if fused.ndim != 3 or fused.shape != (h, w, ms.shape[2]):
                raise SceneError(
                    f"fused product must be {(h, w, ms.shape[2])}, "
                    f"got {fused.shape}")
            self.fused = fused
        self.pan, self.ms = pan, ms
        self.labels, self.objects = labels, objects
        self.ratio = r

    @property
    def num_classes(self):
        return int(self.labels.max())


@dataclass
class PatchPair:
    """One training/evaluation sample cut from a scene."""

    pan_patch: np.ndarray
    ms_patch: np.ndarray
    label: int
    object_id: int
    anchor: tuple
    fused_patch: Optional[np.ndarray] = None


def extract_patch_pair(scene, anchor, d=32):
    """Cut the co-registered window pair centered at high-res pixel anchor.

    anchor is (x, y) with x the column and y the row.  The high-res window
    origin is (x - d/2, y - d/2); it must sit on the r-lattice so the low-res
    window of side d/r aligns exactly.  Raises AlignmentError, BoundsError,
    or LabelError (anchor must carry a nonzero label).
    """
    if d < 2 or d % 2:
        raise ValueError(f"window side must be even and >= 2, got {d}")
    r = scene.ratio
    if d % r:
        raise AlignmentError(f"window side {d} not divisible by ratio {r}")
    x, y = int(anchor[0]), int(anchor[1])
    half = d // 2
    ox, oy = x - half, y - half
    if ox % r or oy % r:
        raise AlignmentError(
            f"anchor ({x}, {y}) origin ({ox}, {oy}) off the {r}-lattice")
    h, w = scene.labels.shape
    if ox < 0 or oy < 0 or ox + d > w or oy + d > h:
        raise BoundsError(f"window at anchor ({x}, {y}) leaves the scene")
    label = int(scene.labels[y, x])
    if label == 0:
        raise LabelError(f"anchor ({x}, {y}) is unlabeled")
    mx, my, md = ox // r, oy // r, d // r
    fused = None
    if scene.fused is not None:
        fused = scene.fused[oy:oy + d, ox:ox + d].copy()
    return PatchPair(
        pan_patch=scene.pan[oy:oy + d, ox:ox + d].copy(),
        ms_patch=scene.ms[my:my + md, mx:mx + md].copy(),
        label=label,
        object_id=int(scene.objects[y, x]),
        anchor=(x, y),
        fused_patch=fused)


def anchor_grid(scene, d=32):
    """All labeled, aligned, in-bounds anchors in row-major (y, then x) order.

    Returns (xs, ys, labels, objects) int arrays of equal length.
    """
    r, half = scene.ratio, d // 2
    h, w = scene.labels.shape
    ys = np.arange(half, h - d + half + 1, r)
    xs = np.arange(half, w - d + half + 1, r)
    if ys.size == 0 or xs.size == 0:
        return (np.zeros(0, np.int64),) * 4
    sub = scene.labels[np.ix_(ys, xs)]
    iy, ix = np.nonzero(sub > 0)
    ax, ay = xs[ix], ys[iy]
    return ax, ay, sub[iy, ix].astype(np.int64), \
        scene.objects[ay, ax].astype(np.int64)


def enumerate_samples(scene, d=32, max_per_object=None, seed=0):
    """Extract every valid sample, optionally capped per object.

    Anchors come out in deterministic row-major order.  With
    ``max_per_object`` set, each object keeps at most that many anchors,
    chosen without replacement by a generator seeded from ``seed`` (the
    survivors stay in row-major order).
    """
    ax, ay, _, objs = anchor_grid(scene, d)
    keep = np.arange(ax.size)
    if max_per_object is not None:
        if max_per_object < 1:
            raise ValueError(f"max_per_object must be >= 1, got {max_per_object}")
        rng = np.random.default_rng(np.random.SeedSequence([seed, ax.size]))
        chosen = []
        for obj in np.unique(objs):
            idx = np.nonzero(objs == obj)[0]
            if idx.size > max_per_object:
                idx = rng.choice(idx, size=max_per_object, replace=False)
            chosen.append(idx)
        keep = np.sort(np.concatenate(chosen)) if chosen else keep
    return [extract_patch_pair(scene, (int(ax[i]), int(ay[i])), d)
            for i in keep]


def stack_samples(samples):
    """Pack a sample list into batched arrays keyed by input source.

    Returns a dict with "pan", "ms", "labels", "objects", and, when every
    sample carries one, "fused".
    """
    if not samples:
        raise ValueError("empty sample list")
    out = {
        "pan": np.stack([s.pan_patch for s in samples]),
        "ms": np.stack([s.ms_patch for s in samples]),
        "labels": np.array([s.label for s in samples], dtype=np.int64),
        "objects": np.array([s.object_id for s in samples], dtype=np.int64),
    }
    if all(s.fused_patch is not None for s in samples):
        out["fused"] = np.stack([s.fused_patch for s in samples])
    return out


def onehot(labels, num_classes):
    """1-based labels -> (N, num_classes) float32 one-hot rows."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 1 or labels.max() > num_classes):
        raise LabelError(
            f"labels outside 1..{num_classes}: "
            f"[{labels.min()}, {labels.max()}]")
    out = np.zeros((labels.size, num_classes), dtype=np.float32)
    out[np.arange(labels.size), labels - 1] = 1.0
    return out

"""Dataset manifests: a key=value file naming the rasters of one scene.

Keys: format=dataset-v1, ratio, bands, classes (comma-separated names),
pan, ms, labels, objects, and optionally fused; raster paths are relative
to the manifest's directory.  Loading normalizes each image band to [0, 1]
over the scene.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..kv import ManifestError, read_kv, write_kv
from .patches import RasterPair, SceneError, normalize
from .raster import read_raster, write_raster

_FORMAT = "dataset-v1"


@dataclass
class Dataset:
    scene: RasterPair
    class_names: list
    manifest_path: Path

    @property
    def num_classes(self):
        return len(self.class_names)


def save_dataset(scene, class_names, out_dir, stem="scene"):
    """Write rasters plus manifest into ``out_dir``; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if any("," in n or "=" in n or not n for n in class_names):
        raise ManifestError("class names must be non-empty, without , or =")
    if len(class_names) < scene.labels.max():
        raise ManifestError(
            f"{len(class_names)} class names for labels up to "
            f"{int(scene.labels.max())}")
    parts = {
        "pan": scene.pan, "ms": scene.ms,
        "labels": scene.labels, "objects": scene.objects,
    }
    if scene.fused is not None:
        parts["fused"] = scene.fused
    pairs = [("format", _FORMAT), ("ratio", str(scene.ratio)),
             ("bands", str(scene.ms.shape[2])),
             ("classes", ",".join(class_names))]
    for key, arr in parts.items():
        name = f"{stem}_{key}.mrr"
        write_raster(out_dir / name, arr)
        pairs.append((key, name))
    manifest = out_dir / f"{stem}.dataset"
    write_kv(manifest, pairs)
    return manifest


def load_dataset(manifest_path, with_normalize=True):
    """Read a manifest and its rasters; image bands scaled to [0, 1]."""
    manifest_path = Path(manifest_path)
    kv = read_kv(manifest_path)
    if kv.get("format") != _FORMAT:
        raise ManifestError(f"{manifest_path}: not a {_FORMAT} manifest")
    missing = [k for k in ("ratio", "bands", "classes", "pan", "ms",
                           "labels", "objects") if k not in kv]
    if missing:
        raise ManifestError(f"{manifest_path}: missing keys {missing}")
    base = manifest_path.parent

    def load(key):
        return read_raster(base / kv[key])

    pan, ms = load("pan"), load("ms")
    labels, objects = load("labels")[:, :, 0], load("objects")[:, :, 0]
    if labels.dtype.kind != "i" or objects.dtype.kind != "i":
        raise ManifestError(f"{manifest_path}: label/object rasters must be i32")
    fused = load("fused") if "fused" in kv else None
    stats = {}
    if with_normalize:
        pan, stats["pan"] = normalize(pan)
        ms, stats["ms"] = normalize(ms)
        if fused is not None:
            fused, stats["fused"] = normalize(fused)
    ratio, bands = int(kv["ratio"]), int(kv["bands"])
    if ms.shape[2] != bands:
        raise ManifestError(
            f"{manifest_path}: bands={bands} but image has {ms.shape[2]}")
    scene = RasterPair(pan=pan, ms=ms, ratio=ratio, labels=labels,
                       objects=objects, fused=fused, band_stats=stats)
    names = kv["classes"].split(",")
    if scene.labels.max() > len(names):
        raise SceneError(
            f"label {int(scene.labels.max())} exceeds the "
            f"{len(names)} named classes")
    return Dataset(scene=scene, class_names=names,
                   manifest_path=manifest_path)

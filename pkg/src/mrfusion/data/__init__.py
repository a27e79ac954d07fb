"""Paired-resolution data pipeline: rasters, scenes, samples, splits."""

from .augment import DIHEDRAL, TRANSFORMS, augment, build_training_set
from .dataset import Dataset, load_dataset, save_dataset
from .patches import (AlignmentError, BoundsError, LabelError, PatchPair,
                      RasterPair, SceneError, anchor_grid, band_range,
                      enumerate_samples, extract_patch_pair, normalize,
                      onehot, stack_samples)
from .raster import RasterFormatError, read_raster, write_raster
from .split import (SplitError, SplitPlan, load_split, object_split,
                    save_split, split_samples)
from .synth import fuse_product, synth_generate

__all__ = [
    "AlignmentError", "BoundsError", "DIHEDRAL", "Dataset", "LabelError",
    "PatchPair", "RasterFormatError", "RasterPair", "SceneError",
    "SplitError", "SplitPlan", "TRANSFORMS", "anchor_grid", "augment",
    "band_range", "build_training_set", "enumerate_samples",
    "extract_patch_pair", "fuse_product", "load_dataset", "load_split",
    "normalize", "object_split", "onehot", "read_raster", "save_dataset",
    "save_split", "split_samples", "stack_samples", "synth_generate",
    "write_raster",
]

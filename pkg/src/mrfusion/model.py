"""Two-branch fusion classifier and its single-branch variants.

A model is a list of convolutional branches, each ending in a global max
pool, whose feature vectors pass through per-branch dropout, are
concatenated, and feed one dense softmax head. The stock configurations:

  - pan branch: 32x32x1 -> conv7/128, pool, conv3/256, pool, conv3/512,
    pool, global max pool -> 512 features
  - ms branch: 8x8x4 -> conv3/256, conv3/512, conv3/1024 (no pooling),
    global max pool -> 1024 features
  - fusion: both branches, 1536 features -> head
  - fused-input competitor: pan topology on 32x32x4 with filter counts
    256/512/1024 -> 1024 features

Every conv stage is stride-1 "same" convolution, then ReLU, then batch
norm, then an optional 2x2/stride-2 max pool.
"""

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn_core as nn
from .kv import ManifestError, read_kv, write_kv
from .nn_core.kernels import DimensionError
from .nn_core.tape import untracked

DEFAULT_DROPOUT = 0.4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ConvStage:
    kernel: int
    filters: int
    pool: bool  # 2x2 stride-2 max pool after conv+relu+bn


@dataclass(frozen=True)
class BranchConfig:
    name: str
    input_shape: tuple  # (H, W, C)
    stages: tuple  # of ConvStage

    def __post_init__(self):
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ConfigError(f"bad input shape {self.input_shape}")
        if not self.stages:
            raise ConfigError(f"branch {self.name!r} has no conv stages")
        counts = [s.filters for s in self.stages]
        if any(b < a for a, b in zip(counts, counts[1:])):
            raise ConfigError(
                f"branch {self.name!r} filter counts must be non-decreasing, "
                f"got {counts}")

    @property
    def feature_width(self):
        return self.stages[-1].filters

    def stages_text(self):
        return ",".join(
            f"{s.kernel}x{s.filters}" + ("+pool" if s.pool else "")
            for s in self.stages)


def parse_stages(text):
    stages = []
    for part in text.split(","):
        part = part.strip()
        pool = part.endswith("+pool")
        if pool:
            part = part[:-len("+pool")]
        try:
            kernel, filters = part.split("x")
            stages.append(ConvStage(int(kernel), int(filters), pool))
        except ValueError:
            raise ManifestError(f"bad conv stage spec {part!r}") from None
    return tuple(stages)


def build_pcnn():
    """High-resolution single-band branch: 32x32x1 -> 512 features."""
    return BranchConfig("pan", (32, 32, 1), (
        ConvStage(7, 128, True),
        ConvStage(3, 256, True),
        ConvStage(3, 512, True),
    ))


def build_mscnn():
    """Low-resolution multiband branch, no pooling: 8x8x4 -> 1024 features."""
    return BranchConfig("ms", (8, 8, 4), (
        ConvStage(3, 256, False),
        ConvStage(3, 512, False),
        ConvStage(3, 1024, False),
    ))


class FusionModel:
    """Branches -> per-branch dropout -> concat -> dense softmax head."""

    def __init__(self, branches, num_classes, dropout_rate=DEFAULT_DROPOUT,
                 seed=0, dtype=np.float32, builder="custom"):
        if num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {num_classes}")
        if not branches:
            raise ConfigError("need at least one branch")
        names = [b.name for b in branches]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate branch names {names}")
        self.branches = tuple(branches)
        self.num_classes = int(num_classes)
        self.dropout_rate = float(dropout_rate)
        self.seed = int(seed)
        self.builder = builder
        self.feature_width = sum(b.feature_width for b in self.branches)
        self.trained = False

        self._branch_layers = []
        for branch in self.branches:
            layers = []
            channels = branch.input_shape[2]
            for i, stage in enumerate(branch.stages):
                layers.append(nn.Conv2D(f"{branch.name}/conv{i}", stage.kernel,
                                        channels, stage.filters))
                layers.append(nn.ReLU())
                layers.append(nn.BatchNorm(f"{branch.name}/bn{i}", stage.filters))
                if stage.pool:
                    layers.append(nn.MaxPool(2, 2))
                channels = stage.filters
            layers.append(nn.GlobalMaxPool())
            layers.append(nn.Dropout(self.dropout_rate))
            self._branch_layers.append(layers)
        self._head = nn.Dense("head", self.feature_width, self.num_classes)

        self.params = nn.ParamSet()
        rng = np.random.default_rng(self.seed)
        for layers in self._branch_layers:
            for layer in layers:
                layer.register(self.params, rng, dtype)
        self._head.register(self.params, rng, dtype)

    # -- forward paths -----------------------------------------------------

    def _check_inputs(self, inputs):
        if hasattr(inputs, "keys"):
            try:
                inputs = [inputs[b.name] for b in self.branches]
            except KeyError as exc:
                raise DimensionError(f"missing input for branch {exc}") from exc
        if len(inputs) != len(self.branches):
            raise DimensionError(
                f"model has {len(self.branches)} branches, "
                f"got {len(inputs)} inputs")
        arrays = []
        batch_sizes = set()
        for x, branch in zip(inputs, self.branches):
            x = np.asarray(x)
            if x.ndim == 3:
                x = x[None]
            if x.ndim != 4 or x.shape[1:] != branch.input_shape:
                raise DimensionError(
                    f"branch {branch.name!r} expects (batch,)+"
                    f"{branch.input_shape}, got {x.shape}")
            arrays.append(x)
            batch_sizes.add(x.shape[0])
        if len(batch_sizes) != 1:
            raise DimensionError(f"branch batch sizes differ: {batch_sizes}")
        return arrays

    def features_node(self, inputs, mode="infer", tape=None, rng=None):
        arrays = self._check_inputs(inputs)
        feature_nodes = []
        for layers, x in zip(self._branch_layers, arrays):
            node = tape.node(x) if tape is not None else untracked(x)
            node = nn.run_layers(layers, node, self.params, mode, tape, rng)
            feature_nodes.append(node)
        if len(feature_nodes) == 1:
            return feature_nodes[0]
        return nn.concat(feature_nodes, tape)

    def logits_node(self, inputs, mode="infer", tape=None, rng=None):
        features = self.features_node(inputs, mode, tape, rng)
        return self._head.forward(features, self.params, mode, tape, rng)

    def forward(self, inputs, mode="infer", tape=None, rng=None):
        """Class probabilities, one row per sample, rows summing to 1."""
        logits = self.logits_node(inputs, mode, tape, rng)
        return nn.softmax(logits.value)

    def loss(self, inputs, labels_onehot, mode="train", tape=None, rng=None):
        """Mean cross-entropy; returns (loss, probs, loss_node)."""
        logits = self.logits_node(inputs, mode, tape, rng)
        return nn.crossentropy(logits, labels_onehot, tape)

    def extract_features(self, inputs):
        """Concatenated branch feature vectors (batch x feature_width),
        inference mode, in branch order."""
        if not self.trained:
            warnings.warn("extracting features from an untrained model",
                          stacklevel=2)
        return self.features_node(inputs, mode="infer").value

    def predict(self, inputs):
        """Most probable class index per sample (infer mode)."""
        return np.argmax(self.forward(inputs), axis=1)


def build_mrfusion(num_classes, seed=0, dtype=np.float32):
    """The two-branch fusion classifier: 512 + 1024 = 1536 features."""
    return FusionModel([build_pcnn(), build_mscnn()], num_classes,
                       DEFAULT_DROPOUT, seed, dtype, builder="mrfusion")


def build_cnnps(num_classes, seed=0, dtype=np.float32):
    """Single-branch competitor on fused 4-band input at full resolution."""
    branch = BranchConfig("fused", (32, 32, 4), (
        ConvStage(7, 256, True),
        ConvStage(3, 512, True),
        ConvStage(3, 1024, True),
    ))
    return FusionModel([branch], num_classes, DEFAULT_DROPOUT, seed, dtype,
                       builder="cnnps")


def build_pan_only(num_classes, seed=0, dtype=np.float32):
    """Ablation: the high-resolution branch alone (512 features)."""
    return FusionModel([build_pcnn()], num_classes, DEFAULT_DROPOUT, seed,
                       dtype, builder="pan")


def build_ms_only(num_classes, seed=0, dtype=np.float32):
    """Ablation: the low-resolution branch alone (1024 features)."""
    return FusionModel([build_mscnn()], num_classes, DEFAULT_DROPOUT, seed,
                       dtype, builder="ms")


MODEL_BUILDERS = {
    "mrfusion": build_mrfusion,
    "cnnps": build_cnnps,
    "pan": build_pan_only,
    "ms": build_ms_only,
}


# ---------------------------------------------------------------------------
# manifest + checkpoint persistence
# ---------------------------------------------------------------------------

def save_model(model, manifest_path, with_optimizer=True):
    """Write `<stem>.mrfw` (weights) and the manifest describing the
    architecture beside it. Returns the checkpoint path."""
    manifest_path = Path(manifest_path)
    ckpt_path = manifest_path.with_suffix(".mrfw")
    model.params.save(ckpt_path, with_optimizer=with_optimizer)
    pairs = {
        "format": "fusion-model-v1",
        "builder": model.builder,
        "num_classes": model.num_classes,
        "dropout": repr(model.dropout_rate),
        "seed": model.seed,
        "trained": int(model.trained),
        "checkpoint": ckpt_path.name,
    }
    for branch in model.branches:
        pairs[f"branch.{branch.name}.input"] = ",".join(
            str(v) for v in branch.input_shape)
        pairs[f"branch.{branch.name}.stages"] = branch.stages_text()
    write_kv(manifest_path, pairs)
    return ckpt_path


def load_model(manifest_path, dtype=np.float32):
    manifest_path = Path(manifest_path)
    pairs = read_kv(manifest_path)
    if pairs.get("format") != "fusion-model-v1":
        raise ManifestError(
            f"{manifest_path}: not a model manifest "
            f"(format={pairs.get('format')!r})")
    branches = []
    for key, value in pairs.items():
        if key.startswith("branch.") and key.endswith(".input"):
            name = key[len("branch."):-len(".input")]
            shape = tuple(int(v) for v in value.split(","))
            stages = parse_stages(pairs[f"branch.{name}.stages"])
            branches.append(BranchConfig(name, shape, stages))
    try:
        model = FusionModel(
            branches,
            num_classes=int(pairs["num_classes"]),
            dropout_rate=float(pairs["dropout"]),
            seed=int(pairs.get("seed", 0)),
            dtype=dtype,
            builder=pairs.get("builder", "custom"),
        )
    except KeyError as exc:
        raise ManifestError(f"{manifest_path}: missing key {exc}") from None
    model.trained = pairs.get("trained", "0") == "1"
    ckpt = manifest_path.parent / pairs["checkpoint"]
    model.params.load(ckpt)
    return model

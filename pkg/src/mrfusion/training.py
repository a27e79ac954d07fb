"""Training loop with lowest-loss checkpointing, full-scene map prediction,
and the repeated-split evaluation protocol."""

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data.augment import build_training_set
from .data.patches import enumerate_samples, onehot, stack_samples
from .data.split import object_split, split_samples
from .metrics import confusion, scores
from .model import MODEL_BUILDERS
from .nn_core import (DimensionError, GradientTape, NumericError,
                      adam_step)


class TrainAbort(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 250
    lr: float = 2e-4
    batch_size: int = 32
    seed: int = 0
    dropout: float = 0.4

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        if self.batch_size < 2:
            raise ValueError(
                f"batch_size must be >= 2 for batch statistics, "
                f"got {self.batch_size}")


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)
    accuracies: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = float("inf")

    def log_text(self):
        """One tab-separated "epoch loss acc seconds" line per epoch."""
        return "".join(
            f"{e}\t{l:.6f}\t{a:.6f}\t{s:.3f}\n"
            for e, (l, a, s) in enumerate(
                zip(self.losses, self.accuracies, self.seconds)))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.log_text())


def arrange_inputs(model, arrays):
    """Order a dict of stacked arrays to match the model's branches."""
    missing = [b.name for b in model.branches if b.name not in arrays]
    if missing:
        raise KeyError(
            f"model needs input(s) {missing} but the sample set only has "
            f"{sorted(k for k in arrays if k not in ('labels', 'objects'))}")
    return [arrays[b.name] for b in model.branches]


def _batch_slices(perm, batch_size):
    out = [perm[i:i + batch_size] for i in range(0, perm.size, batch_size)]
    # batch statistics need >= 2 rows; fold a trailing singleton back in
    if len(out) > 1 and out[-1].size == 1:
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def train(model, inputs, labels, config, log_path=None):
    """Optimize the model in place; returns (model, TrainHistory).

    ``inputs`` is a list of stacked arrays in branch order, or a dict keyed
    by branch name.  ``labels`` are 1-based class ids.  Each epoch shuffles
    with a generator seeded by (seed, epoch), so a fixed config reproduces
    the run bitwise.  Parameters are snapshotted whenever the epoch-mean
    loss strictly improves and the best snapshot is restored at the end.
    """
    if isinstance(inputs, dict):
        inputs = arrange_inputs(model, inputs)
    inputs = [np.asarray(x) for x in inputs]
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    if n < 2:
        raise TrainAbort(f"need at least 2 training samples, got {n}")
    if any(x.shape[0] != n for x in inputs):
        raise DimensionError("input stacks and labels disagree on count")
    targets = onehot(labels, model.num_classes)

    drop_rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, 1, 0]))
    history = TrainHistory()
    snapshot = model.params.copy_values()
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        perm = np.random.default_rng(
            np.random.SeedSequence([config.seed, epoch])).permutation(n)
        loss_sum, correct = 0.0, 0
        for bi, idx in enumerate(_batch_slices(perm, config.batch_size)):
            xb = [x[idx] for x in inputs]
            tape = GradientTape()
            try:
                loss, probs, loss_node = model.loss(
                    xb, targets[idx], "train", tape, drop_rng)
            except NumericError as exc:
                raise TrainAbort(
                    f"non-finite loss at epoch {epoch}, batch {bi}: "
                    f"{exc}") from exc
            if not np.isfinite(loss):
                raise TrainAbort(
                    f"non-finite loss at epoch {epoch}, batch {bi}")
            grads = tape.backward(loss_node, model.params)
            adam_step(model.params, grads, lr=config.lr)
            loss_sum += float(loss) * idx.size
            correct += int((np.argmax(probs, axis=1) + 1 == labels[idx]).sum())
        epoch_loss = loss_sum / n
        history.losses.append(epoch_loss)
        history.accuracies.append(correct / n)
        history.seconds.append(time.perf_counter() - t0)
        if epoch_loss < history.best_loss:
            history.best_loss = epoch_loss
            history.best_epoch = epoch
            snapshot = model.params.copy_values()
    model.params.set_values(snapshot)
    model.trained = True
    if log_path is not None:
        history.save(log_path)
    return model, history


def predict_labels(model, inputs, batch_size=64):
    """1-based argmax class per sample, evaluated in chunks."""
    if isinstance(inputs, dict):
        inputs = arrange_inputs(model, inputs)
    inputs = [np.asarray(x) for x in inputs]
    n = inputs[0].shape[0]
    out = np.empty(n, dtype=np.int64)
    for start in range(0, n, batch_size):
        sl = slice(start, start + batch_size)
        out[sl] = model.predict([x[sl] for x in inputs]) + 1
    return out


def evaluate(model, inputs, labels, batch_size=64):
    """Returns (ConfusionMatrix, score dict) on a labeled sample stack."""
    pred = predict_labels(model, inputs, batch_size)
    cm = confusion(labels, pred, model.num_classes)
    return cm, scores(cm)


def _window_geometry(model, scene):
    """Per-branch (source name, window side, is_high_res); also the
    equivalent high-res window side d."""
    plan, d = [], None
    for b in model.branches:
        side = b.input_shape[0]
        if b.name == "ms":
            eff = side * scene.ratio
        else:
            eff = side
        if d is None:
            d = eff
        elif d != eff:
            raise DimensionError(
                f"branch {b.name!r} implies window {eff}, others use {d}")
        plan.append((b.name, side))
    return plan, d


def predict_map(model, scene, stride=1, batch_size=64):
    """Classify the whole scene at high resolution.

    Every pixel on the stride lattice becomes a window center; windows are
    cut from edge-replicated padding so borders are covered, and the
    low-res window origin is floor(high_res_origin / r) for centers off
    the r-lattice.  With stride > 1 the remaining pixels copy their nearest
    anchor.  Returns (label map (H, W) int32 1-based,
    probability map (H, W, num_classes) float32).
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    plan, d = _window_geometry(model, scene)
    h, w = scene.labels.shape
    if h < d or w < d:
        raise DimensionError(f"scene {h}x{w} smaller than window {d}")
    half, r = d // 2, scene.ratio

    views = {}
    for name, side in plan:
        if name == "ms":
            pad = -(-half // r)
            src = np.pad(scene.ms, ((pad, pad), (pad, pad), (0, 0)),
                         mode="edge")
        else:
            if name == "fused":
                if scene.fused is None:
                    raise DimensionError(
                        "model needs a fused input but the scene has none")
                base = scene.fused
            else:
                base = scene.pan
            pad = half
            src = np.pad(base, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
        # window view indexed by padded origin: [oy, ox] -> (C, side, side)
        views[name] = np.lib.stride_tricks.sliding_window_view(
            src, (side, side), axis=(0, 1))

    ys = np.arange(0, h, stride)
    xs = np.arange(0, w, stride)
    anchor_probs = np.empty((ys.size, xs.size, model.num_classes),
                            dtype=np.float32)
    mpad = -(-half // r)
    for yi, y in enumerate(ys):
        for start in range(0, xs.size, batch_size):
            xblock = xs[start:start + batch_size]
            batch = []
            for name, side in plan:
                if name == "ms":
                    oy = (y - half) // r + mpad
                    ox = (xblock - half) // r + mpad
                else:
                    oy, ox = y, xblock
                wins = views[name][oy, ox]
                batch.append(np.ascontiguousarray(
                    wins.transpose(0, 2, 3, 1)))
            anchor_probs[yi, start:start + xblock.size] = \
                model.forward(batch)

    iy = np.clip((np.arange(h) + stride // 2) // stride, 0, ys.size - 1)
    ix = np.clip((np.arange(w) + stride // 2) // stride, 0, xs.size - 1)
    prob_map = anchor_probs[np.ix_(iy, ix)]
    label_map = (np.argmax(prob_map, axis=2) + 1).astype(np.int32)
    return label_map, prob_map


def run_splits(dataset, builder="mrfusion", n_splits=10, config=None, d=32,
               train_ratio=0.30, max_per_object=None, eval_batch=64):
    """Repeat split/train/evaluate; returns (per-split rows, summary).

    Split i derives everything (object split, model init, shuffles,
    augmentation picks) from seed config.seed + i.  Rows carry accuracy,
    weighted F-measure, and the chance-corrected agreement score; the
    summary holds their mean and population standard deviation.
    """
    if n_splits < 1:
        raise ValueError(f"n_splits must be >= 1, got {n_splits}")
    config = config or TrainConfig()
    build = MODEL_BUILDERS[builder] if isinstance(builder, str) else builder
    samples = enumerate_samples(dataset.scene, d, max_per_object,
                                seed=config.seed)
    rows = []
    for i in range(n_splits):
        seed_i = config.seed + i
        plan = object_split(samples, train_ratio, seed=seed_i)
        train_part, test_part = split_samples(samples, plan)
        augmented = build_training_set(train_part, seed=seed_i)
        tr = stack_samples(augmented)
        te = stack_samples(test_part)
        model = build(dataset.num_classes, seed=seed_i)
        cfg = replace(config, seed=seed_i)
        train(model, arrange_inputs(model, tr), tr["labels"], cfg)
        _, sc = evaluate(model, arrange_inputs(model, te), te["labels"],
                         batch_size=eval_batch)
        rows.append({"split": i, "accuracy": sc["accuracy"],
                     "fmeasure": sc["fmeasure"], "kappa": sc["kappa"]})
    return rows, summarize_rows(rows)


def summarize_rows(rows):
    """Mean and population std (ddof=0) per metric column."""
    out = {}
    for key in ("accuracy", "fmeasure", "kappa"):
        vals = np.array([r[key] for r in rows], dtype=np.float64)
        out[key] = (float(vals.mean()), float(vals.std()))
    return out


def metrics_csv(rows, summary=None):
    """CSV text: header, one row per split, then mean/std rows."""
    lines = ["split,accuracy,fmeasure,kappa"]
    for r in rows:
        lines.append(f"{r['split']},{r['accuracy']:.6f},"
                     f"{r['fmeasure']:.6f},{r['kappa']:.6f}")
    if summary is not None:
        for stat, pick in (("mean", 0), ("std", 1)):
            lines.append(stat + "," + ",".join(
                f"{summary[k][pick]:.6f}"
                for k in ("accuracy", "fmeasure", "kappa")))
    return "\n".join(lines) + "\n"

"""Object-level train/test splitting.

Samples from one object are spatially correlated, so the split is decided
per object id, stratified by class: within each class, round(n * ratio)
objects (clipped to keep at least one object on each side) go to the
training set.  Every sample of an object follows its object's side, so no
object contributes to both sets.
"""

from dataclasses import dataclass

import numpy as np

from ..kv import read_kv, write_kv


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    ratio: float
    train_objects: frozenset
    test_objects: frozenset

    def side(self, object_id):
        if object_id in self.train_objects:
            return "train"
        if object_id in self.test_objects:
            return "test"
        raise SplitError(f"object {object_id} not covered by this split")


def object_split(samples, ratio=0.30, seed=0):
    """Assign whole objects to train/test, stratified per class."""
    if not 0.0 < ratio < 1.0:
        raise SplitError(f"train ratio must be in (0, 1), got {ratio}")
    if not samples:
        raise SplitError("no samples to split")
    by_class = {}
    for s in samples:
        by_class.setdefault(s.label, set()).add(s.object_id)
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(samples)]))
    train, test = set(), set()
    for label in sorted(by_class):
        objs = np.array(sorted(by_class[label]), dtype=np.int64)
        if objs.size < 2:
            raise SplitError(
                f"class {label} has {objs.size} object(s); need >= 2 to split")
        n_train = int(np.clip(round(objs.size * ratio), 1, objs.size - 1))
        order = rng.permutation(objs.size)
        train.update(objs[order[:n_train]].tolist())
        test.update(objs[order[n_train:]].tolist())
    return SplitPlan(seed=seed, ratio=ratio,
                     train_objects=frozenset(train),
                     test_objects=frozenset(test))


def split_samples(samples, plan):
    """Partition a sample list by the plan; order within each side is kept."""
    train = [s for s in samples if s.object_id in plan.train_objects]
    test = [s for s in samples if s.object_id in plan.test_objects]
    stray = {s.object_id for s in samples} - plan.train_objects - plan.test_objects
    if stray:
        raise SplitError(f"objects not covered by split plan: {sorted(stray)}")
    return train, test


def _ids_text(ids):
    return ",".join(str(i) for i in sorted(ids))


def save_split(plan, path):
    write_kv(path, [
        ("format", "object-split-v1"),
        ("seed", str(plan.seed)),
        ("ratio", repr(plan.ratio)),
        ("train", _ids_text(plan.train_objects)),
        ("test", _ids_text(plan.test_objects)),
    ])


def load_split(path):
    kv = read_kv(path)
    if kv.get("format") != "object-split-v1":
        raise SplitError(f"{path}: not an object-split file")
    try:
        train = frozenset(int(t) for t in kv["train"].split(",") if t)
        test = frozenset(int(t) for t in kv["test"].split(",") if t)
        plan = SplitPlan(seed=int(kv["seed"]), ratio=float(kv["ratio"]),
                         train_objects=train, test_objects=test)
    except (KeyError, ValueError) as exc:
        raise SplitError(f"{path}: malformed split file ({exc})") from None
    if plan.train_objects & plan.test_objects:
        raise SplitError(f"{path}: train/test object sets overlap")
    return plan

"""From-scratch random forest classifier (CART trees, Gini splits).

Trees grow on bootstrap resamples of size n. At each node a random subset of
max(1, int(sqrt(n_features))) candidate features is examined; features that
are constant within the node do not count against that budget, so a node
only becomes a leaf when it is pure, hits a depth/size limit, or no feature
varies at all. Leaves store normalized class histograms; prediction averages
them across trees and takes the argmax, breaking ties toward the lowest
class id.

Serialized format (magic "MRRF1", all integers little-endian i64, floats
little-endian f64):

    b"MRRF1"
    n_trees, n_classes, n_features, min_leaf, max_depth (-1 = unlimited), seed
    classes_[n_classes]
    per tree: n_nodes, feature[n_nodes] (-1 = leaf), threshold[n_nodes],
              left[n_nodes], right[n_nodes], hist[n_nodes * n_classes]
"""

import struct
import warnings
from dataclasses import dataclass

import numpy as np


class ForestError(ValueError):
    pass


MAGIC = b"MRRF1"


@dataclass
class ForestConfig:
    n_trees: int = 400
    max_depth: int = None  # None = unlimited
    min_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ForestError(f"need at least 1 tree, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ForestError(f"min_leaf must be >= 1, got {self.min_leaf}")


def features_per_split(n_features):
    return max(1, int(np.sqrt(n_features)))


@dataclass
class _Tree:
    feature: np.ndarray    # i64, -1 marks a leaf
    threshold: np.ndarray  # f64, split rule x <= threshold goes left
    left: np.ndarray       # i64 child indices
    right: np.ndarray
    hist: np.ndarray       # f64 (n_nodes, n_classes), rows sum to 1 at leaves


class Forest:
    def __init__(self, config, classes, n_features, trees):
        self.config = config
        self.classes_ = classes        # sorted original label values
        self.n_features = n_features
        self.trees = trees


def _gini_best_split(x, y_onehot, candidates, min_leaf):
    """Best (feature, threshold, weighted_impurity) over candidate columns.

    y_onehot is (n, C). Returns None when no candidate admits a valid split.
    """
    n = x.shape[0]
    best = None
    for f in candidates:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        cum = np.cumsum(y_onehot[order], axis=0)      # (n, C)
        total = cum[-1]
        # split after position i: left = first i+1 samples
        nl = np.arange(1, n, dtype=np.float64)
        valid = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (n - nl >= min_leaf)
        if not valid.any():
            continue
        left = cum[:-1]
        right = total - left
        nr = n - nl
        gini_l = 1.0 - np.sum(left * left, axis=1) / (nl * nl)
        gini_r = 1.0 - np.sum(right * right, axis=1) / (nr * nr)
        weighted = (nl * gini_l + nr * gini_r) / n
        weighted = np.where(valid, weighted, np.inf)
        i = int(np.argmin(weighted))
        if best is None or weighted[i] < best[2]:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if thr <= xs[i]:  # guard midpoint rounding into the left value
                thr = xs[i]
            best = (int(f), float(thr), float(weighted[i]))
    return best


def _grow_tree(x, y_idx, n_classes, rng, config):
    """CART on (x, y_idx) with y_idx in 0..n_classes-1; returns a _Tree."""
    n, n_features = x.shape
    k = features_per_split(n_features)
    y_onehot = np.zeros((n, n_classes), dtype=np.float64)
    y_onehot[np.arange(n), y_idx] = 1.0

    feature, threshold, left, right, hist = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        hist.append(np.zeros(n_classes))
        return len(feature) - 1

    # worklist of (node_id, sample_index_array, depth)
    stack = [(new_node(), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = y_onehot[idx].sum(axis=0)
        pure = counts.max() == idx.size
        depth_capped = config.max_depth is not None and depth >= config.max_depth
        split = None
        if not pure and not depth_capped and idx.size >= 2 * config.min_leaf:
            # walk a random feature order, trying up to k non-constant ones
            sub_x = x[idx]
            candidates = []
            for f in rng.permutation(n_features):
                col = sub_x[:, f]
                if (col != col[0]).any():
                    candidates.append(f)
                    if len(candidates) == k:
                        split = _gini_best_split(sub_x, y_onehot[idx],
                                                 candidates, config.min_leaf)
                        if split is not None:
                            break
                        candidates = []
            if split is None and candidates:
                split = _gini_best_split(sub_x, y_onehot[idx], candidates,
                                         config.min_leaf)
        if split is None:
            hist[node] = counts / idx.size
            continue
        f, thr, _ = split
        go_left = x[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node()
        right[node] = new_node()
        stack.append((left[node], idx[go_left], depth + 1))
        stack.append((right[node], idx[~go_left], depth + 1))

    return _Tree(np.asarray(feature, dtype=np.int64),
                 np.asarray(threshold, dtype=np.float64),
                 np.asarray(left, dtype=np.int64),
                 np.asarray(right, dtype=np.int64),
                 np.stack(hist).astype(np.float64))


def fit(x, y, config=None):
    """Train a forest on x (n, features) with integer labels y."""
    config = config or ForestConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2:
        raise ForestError(f"x must be (samples, features), got {x.shape}")
    if y.shape != (x.shape[0],):
        raise ForestError(f"y shape {y.shape} != ({x.shape[0]},)")
    if x.shape[0] < 2:
        raise ForestError(f"need at least 2 samples, got {x.shape[0]}")
    classes = np.unique(y)
    if classes.size < 2:
        warnings.warn("single-class training labels: forest is a constant "
                      "predictor", stacklevel=2)
    y_idx = np.searchsorted(classes, y)

    n = x.shape[0]
    trees = []
    for seq in np.random.SeedSequence(config.seed).spawn(config.n_trees):
        rng = np.random.default_rng(seq)
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_tree(x[boot], y_idx[boot], classes.size, rng,
                                config))
    return Forest(config, classes.astype(np.int64), x.shape[1], trees)


def _tree_leaf(tree, x):
    node = np.zeros(x.shape[0], dtype=np.int64)
    while True:
        f = tree.feature[node]
        internal = f >= 0
        if not internal.any():
            return node
        rows = np.where(internal)[0]
        at = node[rows]
        go_left = x[rows, f[rows]] <= tree.threshold[at]
        node[rows] = np.where(go_left, tree.left[at], tree.right[at])


def predict_proba(forest, x):
    """Vote fractions (n, n_classes), columns ordered by forest.classes_."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != forest.n_features:
        raise ForestError(
            f"expected (n, {forest.n_features}) features, got {x.shape}")
    probs = np.zeros((x.shape[0], forest.classes_.size), dtype=np.float64)
    for tree in forest.trees:
        probs += tree.hist[_tree_leaf(tree, x)]
    probs /= len(forest.trees)
    return probs


def predict(forest, x):
    """Majority labels; ties resolve to the lowest class id."""
    probs = predict_proba(forest, x)
    return forest.classes_[np.argmax(probs, axis=1)]


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_forest(forest, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        cfg = forest.config
        depth = -1 if cfg.max_depth is None else cfg.max_depth
        fh.write(struct.pack("<6q", cfg.n_trees, forest.classes_.size,
                             forest.n_features, cfg.min_leaf, depth,
                             cfg.seed))
        fh.write(forest.classes_.astype("<i8").tobytes())
        for tree in forest.trees:
            fh.write(struct.pack("<q", tree.feature.size))
            fh.write(tree.feature.astype("<i8").tobytes())
            fh.write(tree.threshold.astype("<f8").tobytes())
            fh.write(tree.left.astype("<i8").tobytes())
            fh.write(tree.right.astype("<i8").tobytes())
            fh.write(tree.hist.astype("<f8").tobytes())


def _read_exact(fh, count, what):
    raw = fh.read(count)
    if len(raw) != count:
        raise ForestError(f"truncated forest file while reading {what}")
    return raw


def _read_array(fh, dtype, count, what):
    itemsize = np.dtype(dtype).itemsize
    return np.frombuffer(_read_exact(fh, itemsize * count, what),
                         dtype=dtype).copy()


def load_forest(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ForestError(f"bad magic in {path}")
        (n_trees, n_classes, n_features, min_leaf, depth, seed
         ) = struct.unpack("<6q", _read_exact(fh, 48, "header"))
        config = ForestConfig(n_trees=n_trees,
                              max_depth=None if depth < 0 else depth,
                              min_leaf=min_leaf, seed=seed)
        classes = _read_array(fh, "<i8", n_classes, "classes")
        trees = []
        for t in range(n_trees):
            (n_nodes,) = struct.unpack("<q", _read_exact(fh, 8, "node count"))
            trees.append(_Tree(
                _read_array(fh, "<i8", n_nodes, f"tree {t} features"),
                _read_array(fh, "<f8", n_nodes, f"tree {t} thresholds"),
                _read_array(fh, "<i8", n_nodes, f"tree {t} left"),
                _read_array(fh, "<i8", n_nodes, f"tree {t} right"),
                _read_array(fh, "<f8", n_nodes * n_classes,
                            f"tree {t} histograms").reshape(n_nodes,
                                                            n_classes),
            ))
        return Forest(config, classes, n_features, trees)

"""Random forest over the ten forensic features, grown from scratch.

Greedy binary trees on Gini impurity with bootstrap sampling and
sqrt(n_features) feature subsampling per split. Ties break toward the
first candidate in (sorted feature, ascending threshold) order, and the
prediction tie toward class 0 (camera), so training and prediction are
deterministic per seed.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .util import derive_seed


@dataclass
class ForestConfig:
    trees: int = 50
    max_depth: int = 12
    seed: int = 0


@dataclass
class Forest:
    trees: list  # nested [feature, threshold, left, right] / ["leaf", class]
    n_features: int
    config: ForestConfig = field(default_factory=ForestConfig)


def _gini_costs(ys_sorted, boundaries):
    """Weighted Gini impurity of every candidate split position.

    boundaries are indices i meaning left = [0..i], right = [i+1..n-1].
    """
    n = len(ys_sorted)
    ones = np.cumsum(ys_sorted)
    nl = boundaries + 1
    nr = n - nl
    l1 = ones[boundaries]
    r1 = ones[-1] - l1
    pl = l1 / nl
    pr = r1 / nr
    gini_l = 1.0 - pl ** 2 - (1.0 - pl) ** 2
    gini_r = 1.0 - pr ** 2 - (1.0 - pr) ** 2
    return (nl * gini_l + nr * gini_r) / n


def _grow(x, y, idx, depth, max_depth, n_sub, rng):
    ys = y[idx]
    ones = int(ys.sum())
    if ones == 0 or ones == len(idx):
        return ["leaf", int(ys[0])]
    if depth >= max_depth or len(idx) < 2:
        return _majority_leaf(ys)

    # draw features in random order until n_sub usable (non-constant) ones
    # have been scored, mirroring standard forest splitters
    best = None  # (cost, feature, threshold)
    scored = 0
    for f in rng.permutation(x.shape[1]):
        v = x[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        boundaries = np.nonzero(vs[:-1] < vs[1:])[0]
        if boundaries.size == 0:
            continue
        costs = _gini_costs(ys[order], boundaries)
        j = int(np.argmin(costs))
        cost = float(costs[j])
        if best is None or cost < best[0]:
            b = boundaries[j]
            best = (cost, int(f), float((vs[b] + vs[b + 1]) / 2.0))
        scored += 1
        if scored == n_sub:
            break
    if best is None:
        return _majority_leaf(ys)
    _, f, threshold = best
    mask = x[idx, f] < threshold
    left = _grow(x, y, idx[mask], depth + 1, max_depth, n_sub, rng)
    right = _grow(x, y, idx[~mask], depth + 1, max_depth, n_sub, rng)
    return [f, threshold, left, right]


def _majority_leaf(ys):
    ones = int(ys.sum())
    zeros = len(ys) - ones
    return ["leaf", 1 if ones > zeros else 0]  # tie -> camera


def _as_matrix(features):
    if isinstance(features, np.ndarray):
        return np.asarray(features, np.float64)
    return np.stack([fv.as_array() for fv in features]).astype(np.float64)


def train_forest(features, labels, config=None):
    """Fit a forest; features may be an (N,F) array or a list of FeatureVector."""
    config = config or ForestConfig()
    x = _as_matrix(features)
    y = np.asarray(labels, np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise DataError(f"features {x.shape} do not match {len(y)} labels")
    counts = np.bincount(y, minlength=2)
    if counts[0] < 2 or counts[1] < 2:
        raise DataError(f"need at least 2 samples per class, got {counts.tolist()}")
    n, n_features = x.shape
    n_sub = max(1, int(math.sqrt(n_features)))
    trees = []
    for i in range(config.trees):
        rng = np.random.default_rng(derive_seed(config.seed, "tree", i))
        bootstrap = rng.integers(0, n, size=n)
        xb = x[bootstrap]
        yb = y[bootstrap]
        trees.append(_grow(xb, yb, np.arange(n), 0, config.max_depth, n_sub, rng))
    return Forest(trees, n_features, config)


def _tree_predict(node, row):
    while node[0] != "leaf":
        f, threshold, left, right = node
        node = left if row[f] < threshold else right
    return node[1]


def forest_predict(forest, features):
    """Majority vote over trees; returns (class, vote fraction).

    Ties break toward class 0 (camera). The vote fraction is the share of
    trees voting for the returned class.
    """
    row = np.asarray(features.as_array() if hasattr(features, "as_array") else features,
                     np.float64)
    votes = sum(_tree_predict(t, row) for t in forest.trees)
    total = len(forest.trees)
    cls = 1 if votes > total - votes else 0
    fraction = (votes if cls == 1 else total - votes) / total
    return cls, fraction


def forest_predict_many(forest, features):
    x = _as_matrix(features)
    return np.array([forest_predict(forest, row)[0] for row in x], np.int64)


def save_forest(forest, path):
    doc = {
        "format": "synthsieve-forest-v1",
        "n_features": forest.n_features,
        "config": {"trees": forest.config.trees, "max_depth": forest.config.max_depth,
                   "seed": forest.config.seed},
        "trees": forest.trees,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_forest(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load forest {path}: {exc}") from exc
    if doc.get("format") != "synthsieve-forest-v1":
        raise DataError(f"{path}: not a forest file")
    cfg = doc.get("config", {})
    return Forest(doc["trees"], doc["n_features"],
                  ForestConfig(cfg.get("trees", 0), cfg.get("max_depth", 0),
                               cfg.get("seed", 0)))

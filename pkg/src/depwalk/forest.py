"""Random forest over dependency feature vectors.

CART-style trees grown on bootstrap resamples with Gini impurity splits over
a random feature subset per node.  The predicted probability is the fraction
of trees voting true.  Bootstrap draws are keyed to (seed, tree index) and
training rows are put into a canonical order first, so training is invariant
to the order rows arrive in.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import LabelBalanceError, UnknownAddressError
from .seeds import derive_seed


@dataclass
class LabeledPair:
    """An address pair with its feature vector and dependency label."""

    src: str
    dst: str
    features: np.ndarray | None
    label: bool


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # default: ceil(sqrt(dims)) at fit time
    bootstrap: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1 or None")


@dataclass(frozen=True)
class _TreeNodes:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: tuple[int, ...]
    threshold: tuple[float, ...]
    left: tuple[int, ...]
    right: tuple[int, ...]
    leaf_p: tuple[float, ...]


@dataclass(frozen=True)
class ForestModel:
    n_features: int
    trees: tuple[_TreeNodes, ...]


def build_label_set(ground_truth: Iterable[tuple[str, str]], vertices: Iterable[str],
                    rng_seed: int, unordered: bool = False) -> list[LabeledPair]:
    """Ground-truth pairs labelled true plus an equal number of uniformly
    drawn distinct non-dependency pairs labelled false.

    Pairs are ordered by default; ``unordered`` collapses each pair to its
    sorted form for the direction-free reading.  Feature vectors are left
    unset.  Raises when the vertex universe cannot supply enough negatives.
    """
    verts = sorted(set(vertices))
    vset = set(verts)

    def canon(a: str, b: str) -> tuple[str, str]:
        return tuple(sorted((a, b))) if unordered else (a, b)

    positives: set[tuple[str, str]] = set()
    for a, b in ground_truth:
        if a not in vset:
            raise UnknownAddressError(a)
        if b not in vset:
            raise UnknownAddressError(b)
        if a == b:
            raise ValueError(f"self pair in ground truth: {a}")
        positives.add(canon(a, b))
    if not positives:
        raise LabelBalanceError("ground truth contains no usable pairs")

    n = len(verts)
    universe = n * (n - 1) // (2 if unordered else 1)
    need = len(positives)
    if universe - need < need:
        raise LabelBalanceError(
            f"cannot draw {need} negative pairs: only {universe - need} non-dependency pairs exist")

    rng = random.Random(rng_seed)
    negatives: set[tuple[str, str]] = set()
    if need > (universe - need) // 2:
        # dense label set: enumerate the complement instead of rejecting
        pool = [canon(a, b) for a in verts for b in verts
                if a != b and canon(a, b) not in positives]
        pool = sorted(set(pool))
        negatives = set(rng.sample(pool, need))
    else:
        while len(negatives) < need:
            a = verts[rng.randrange(n)]
            b = verts[rng.randrange(n)]
            if a == b:
                continue
            pair = canon(a, b)
            if pair in positives or pair in negatives:
                continue
            negatives.add(pair)
    out = [LabeledPair(a, b, None, True) for a, b in sorted(positives)]
    out += [LabeledPair(a, b, None, False) for a, b in sorted(negatives)]
    return out


def _best_split(X: np.ndarray, ys: np.ndarray, idx: np.ndarray, k: int,
                min_leaf: int, rng: np.random.Generator):
    """Best (feature, threshold) by weighted Gini over k random features.

    Thresholds are midpoints between consecutive distinct values; both sides
    must keep at least ``min_leaf`` samples.  Ties resolve to the first
    candidate in (feature, position) scan order.
    """
    n = len(idx)
    n_pos = int(ys.sum())
    feats = np.sort(rng.choice(X.shape[1], size=k, replace=False))
    best = None
    for f in feats:
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sy = ys[order]
        cut = np.nonzero(sv[1:] > sv[:-1])[0]
        if cut.size == 0:
            continue
        left_n = cut + 1
        right_n = n - left_n
        valid = (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        left_pos = np.cumsum(sy)[cut]
        right_pos = n_pos - left_pos
        pl = left_pos / left_n
        pr = right_pos / right_n
        weighted = (left_n * (1.0 - pl * pl - (1.0 - pl) ** 2)
                    + right_n * (1.0 - pr * pr - (1.0 - pr) ** 2)) / n
        weighted = np.where(valid, weighted, np.inf)
        i = int(np.argmin(weighted))
        score = float(weighted[i])
        if best is None or score < best[0]:
            threshold = float((sv[cut[i]] + sv[cut[i] + 1]) / 2.0)
            best = (score, int(f), threshold)
    if best is None:
        return None
    return best[1], best[2]


def _grow_tree(X: np.ndarray, y: np.ndarray, sample_idx: np.ndarray,
               cfg: ForestConfig, k: int, rng: np.random.Generator) -> _TreeNodes:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    leaf_p: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_p.append(0.0)
        return len(feature) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        ys = y[idx]
        n_node = len(idx)
        n_pos = int(ys.sum())
        stop = (n_pos == 0 or n_pos == n_node
                or (cfg.max_depth is not None and depth >= cfg.max_depth)
                or n_node < 2 * cfg.min_samples_leaf)
        split = None if stop else _best_split(X, ys, idx, k, cfg.min_samples_leaf, rng)
        if split is None:
            leaf_p[node] = n_pos / n_node
            return node
        f, thr = split
        mask = X[idx, f] <= thr
        left_child = build(idx[mask], depth + 1)
        right_child = build(idx[~mask], depth + 1)
        feature[node] = f
        threshold[node] = thr
        left[node] = left_child
        right[node] = right_child
        return node

    build(np.asarray(sample_idx), 0)
    return _TreeNodes(tuple(feature), tuple(threshold), tuple(left), tuple(right), tuple(leaf_p))


def train_forest(data: Sequence[LabeledPair], cfg: ForestConfig) -> ForestModel:
    """Grow ``n_trees`` trees on bootstrap resamples of the labelled pairs."""
    if not data:
        raise ValueError("training data is empty")
    features = [p.features for p in data]
    if any(f is None for f in features):
        raise ValueError("training pairs are missing feature vectors")
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValueError("inconsistent feature vector lengths")
    y = np.asarray([bool(p.label) for p in data])
    if bool(y.all()) or not bool(y.any()):
        raise ValueError("training data must contain both classes")

    # canonical row order; with (seed, tree)-keyed bootstrap draws this makes
    # training independent of the incoming row order
    keys = [y.astype(float)] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    order = np.lexsort(keys)
    X = X[order]
    y = y[order]

    dims = X.shape[1]
    k = cfg.features_per_split if cfg.features_per_split is not None else math.ceil(math.sqrt(dims))
    k = min(k, dims)
    n = len(y)
    trees = []
    for t in range(cfg.n_trees):
        rng = np.random.default_rng(derive_seed(cfg.rng_seed, f"tree:{t}"))
        idx = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        trees.append(_grow_tree(X, y, idx, cfg, k, rng))
    return ForestModel(dims, tuple(trees))


def _tree_vote(tree: _TreeNodes, x: np.ndarray) -> bool:
    node = 0
    while tree.feature[node] >= 0:
        node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return tree.leaf_p[node] >= 0.5


def predict_proba(model: ForestModel, features) -> float:
    """Fraction of trees voting true for this feature vector."""
    x = np.asarray(features, dtype=float)
    if x.shape != (model.n_features,):
        raise ValueError(f"expected {model.n_features} features, got shape {x.shape}")
    votes = sum(_tree_vote(tree, x) for tree in model.trees)
    return votes / len(model.trees)


def classify(model: ForestModel, features) -> bool:
    """Dependency verdict; a probability of exactly 0.5 counts as positive."""
    return predict_proba(model, features) >= 0.5


def predict_proba_many(model: ForestModel, rows) -> np.ndarray:
    return np.array([predict_proba(model, row) for row in np.asarray(rows, dtype=float)])


def save_forest(model: ForestModel, path) -> None:
    obj = {
        "format": "depwalk-forest",
        "version": 1,
        "n_features": model.n_features,
        "trees": [
            {"feature": list(t.feature), "threshold": list(t.threshold),
             "left": list(t.left), "right": list(t.right), "leaf_p": list(t.leaf_p)}
            for t in model.trees
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def load_forest(path) -> ForestModel:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("format") != "depwalk-forest" or obj.get("version") != 1:
        raise ValueError(f"{path}: not a version-1 forest file")
    trees = tuple(
        _TreeNodes(tuple(t["feature"]), tuple(t["threshold"]),
                   tuple(t["left"]), tuple(t["right"]), tuple(t["leaf_p"]))
        for t in obj["trees"]
    )
    return ForestModel(int(obj["n_features"]), trees)

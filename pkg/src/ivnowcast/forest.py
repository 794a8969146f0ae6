"""CART decision trees and a bootstrap random-forest classifier.

Trees are grown greedily on weighted Gini impurity. Bootstrap resamples are
represented as integer sample weights, so a row drawn three times carries
weight 3 everywhere (node sizes, leaf minimums, impurity).

Each tree owns an RNG stream keyed on ``(seed, tree_index)``, which makes
the forest independent of how trees are scheduled across workers.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

FORMAT_VERSION = 1

GRID = {
    "max_depth": (4, 6, 8, 10),
    "min_samples_split": (5, 10, 15, 20),
    "min_samples_leaf": (1, 3, 5, 8),
}

# absolute slack when comparing impurity scores; distinct splits differ by far more
_TIE_EPS = 1e-10


class EmptyData(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 1000
    max_depth: int | None = 8
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    seed: int = 42
    max_features: str | int | None = "sqrt"
    bootstrap: bool = True

    @property
    def config_id(self) -> str:
        return f"d{self.max_depth}-s{self.min_samples_split}-l{self.min_samples_leaf}"

    def features_per_split(self, n_features: int) -> int:
        if self.max_features is None or self.max_features == "all":
            return n_features
        if self.max_features == "sqrt":
            return max(1, min(n_features, math.ceil(math.sqrt(n_features))))
        return max(1, min(n_features, int(self.max_features)))


def config_grid(
    n_trees: int = 1000,
    seed: int = 42,
    max_depth: Sequence[int] = GRID["max_depth"],
    min_samples_split: Sequence[int] = GRID["min_samples_split"],
    min_samples_leaf: Sequence[int] = GRID["min_samples_leaf"],
) -> list[ForestConfig]:
    return [
        ForestConfig(n_trees=n_trees, max_depth=d, min_samples_split=s, min_samples_leaf=l, seed=seed)
        for d, s, l in itertools.product(max_depth, min_samples_split, min_samples_leaf)
    ]


@dataclass
class Tree:
    """Flat binary tree; ``feature[i] == -1`` marks node ``i`` as a leaf.

    ``weight`` and ``positive`` are the (bootstrap-weighted) sample count and
    positive count reaching each node; a leaf predicts positive / weight.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray
    positive: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def value(self) -> np.ndarray:
        return self.positive / self.weight

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    @classmethod
    def leaf(cls, positive_fraction: float, weight: float = 1.0) -> "Tree":
        return cls(
            feature=np.array([-1]),
            threshold=np.array([0.0]),
            left=np.array([-1]),
            right=np.array([-1]),
            weight=np.array([float(weight)]),
            positive=np.array([positive_fraction * weight]),
            depth=np.array([0]),
        )

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            n = node[active]
            go_left = X[rows[active], self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "weight": self.weight.tolist(),
            "positive": self.positive.tolist(),
            "depth": self.depth.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            weight=np.asarray(d["weight"], dtype=float),
            positive=np.asarray(d["positive"], dtype=float),
            depth=np.asarray(d["depth"], dtype=np.int64),
        )


def best_split(
    X: np.ndarray,
    wy: np.ndarray,
    w: np.ndarray,
    idx: np.ndarray,
    features: Sequence[int],
    min_samples_leaf: float,
) -> tuple[int, float, float] | None:
    """Lowest weighted-Gini (feature, threshold) over ``features`` for rows ``idx``.

    Returns ``(feature, threshold, score)`` where score = sum over children
    of pos*(n-pos)/n, i.e. N/2 times the weighted Gini. Ties go to the lowest
    feature index, then the lowest threshold. ``None`` if no split leaves at
    least ``min_samples_leaf`` weight on both sides.
    """
    wi, wyi = w[idx], wy[idx]
    total_w = wi.sum()
    total_p = wyi.sum()
    best = None
    for f in sorted(features):
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        cut = np.flatnonzero(xs[:-1] < xs[1:])
        if cut.size == 0:
            continue
        nl = np.cumsum(wi[order])[cut]
        pl = np.cumsum(wyi[order])[cut]
        nr = total_w - nl
        pr = total_p - pl
        ok = (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
        if not ok.any():
            continue
        cut, nl, pl, nr, pr = cut[ok], nl[ok], pl[ok], nr[ok], pr[ok]
        score = pl * (nl - pl) / nl + pr * (nr - pr) / nr
        j = int(np.flatnonzero(score <= score.min() + _TIE_EPS)[0])
        if best is None or score[j] < best[2] - _TIE_EPS:
            lo, hi = xs[cut[j]], xs[cut[j] + 1]
            thr = 0.5 * (lo + hi)
            if thr >= hi:  # adjacent floats: keep the upper value on the right
                thr = lo
            best = (f, float(thr), float(score[j]))
    return best


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    config: ForestConfig,
    rng: np.random.Generator | None = None,
    sample_weight: np.ndarray | None = None,
) -> Tree:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyData("cannot fit a tree on empty data")
    if len(y) != len(X):
        raise ValueError("X and y lengths differ")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    w = np.ones(len(X)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    wy = w * (y == 1)
    n_features = X.shape[1]
    m = config.features_per_split(n_features)

    feature, threshold, left, right, weight, positive, depth = [], [], [], [], [], [], []

    def new_node(idx, d):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        weight.append(float(w[idx].sum()))
        positive.append(float(wy[idx].sum()))
        depth.append(d)
        return len(feature) - 1

    root_idx = np.flatnonzero(w > 0)
    if root_idx.size == 0:
        raise EmptyData("all sample weights are zero")
    stack = [(new_node(root_idx, 0), root_idx, 0)]
    while stack:
        node, idx, d = stack.pop()
        n, p = weight[node], positive[node]
        if p == 0 or p == n:
            continue
        if config.max_depth is not None and d >= config.max_depth:
            continue
        if n < config.min_samples_split:
            continue
        if m < n_features:
            feats = rng.choice(n_features, size=m, replace=False)
        else:
            feats = range(n_features)
        split = best_split(X, wy, w, idx, feats, config.min_samples_leaf)
        if split is None:
            continue
        f, thr, _ = split
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li, d + 1)
        right[node] = new_node(ri, d + 1)
        # right pushed first so the left subtree is grown (and numbered) first
        stack.append((right[node], ri, d + 1))
        stack.append((left[node], li, d + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        weight=np.asarray(weight, dtype=float),
        positive=np.asarray(positive, dtype=float),
        depth=np.asarray(depth, dtype=np.int64),
    )


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, tree_index])


def _fit_one(X, y, config: ForestConfig, k: int) -> Tree:
    rng = tree_rng(config.seed, k)
    n = len(X)
    if config.bootstrap:
        w = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
    else:
        w = None
    return fit_tree(X, y, config, rng, w)


@dataclass
class Forest:
    trees: list[Tree]
    config: ForestConfig
    feature_names: tuple[str, ...] | None = None
    n_features: int | None = None

    def _check(self, X) -> np.ndarray:
        names = getattr(X, "columns", None)
        if names is not None and self.feature_names is not None:
            if tuple(names) != tuple(self.feature_names):
                raise SchemaMismatch(f"columns {tuple(names)} != trained {self.feature_names}")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if self.n_features is not None and X.shape[1] != self.n_features:
            raise SchemaMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        """Mean over trees of the positive fraction in the leaf each row reaches."""
        X = self._check(X)
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "format": "ivnowcast.forest",
            "version": FORMAT_VERSION,
            "config": asdict(self.config),
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported forest artifact version {d.get('version')}")
        names = d.get("feature_names")
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            config=ForestConfig(**d["config"]),
            feature_names=tuple(names) if names else None,
            n_features=d.get("n_features"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "Forest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_forest(
    X,
    y,
    config: ForestConfig,
    feature_names: Sequence[str] | None = None,
    n_jobs: int = 1,
) -> Forest:
    if feature_names is None and hasattr(X, "columns"):
        feature_names = list(X.columns)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyData("cannot fit a forest on empty data")
    if n_jobs == 1:
        trees = [_fit_one(X, y, config, k) for k in range(config.n_trees)]
    else:
        from joblib import Parallel, delayed

        trees = Parallel(n_jobs=n_jobs)(delayed(_fit_one)(X, y, config, k) for k in range(config.n_trees))
    return Forest(trees, config, tuple(feature_names) if feature_names else None, X.shape[1])


def predict_proba(forest: Forest, X) -> np.ndarray:
    return forest.predict_proba(X)

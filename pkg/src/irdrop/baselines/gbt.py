"""Gradient-boosted regression trees on tabular per-net features.

Squared-error boosting: each round fits a depth-limited tree to the current
residuals with exact greedy splits (largest variance reduction), and adds it
scaled by the learning rate. MAE is what gets reported.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .._validation import as_index, as_matrix, as_vector
from ..exceptions import ValidationError

MODEL_FORMAT = "irdrop.gbt"
_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class GbtConfig:
    n_trees: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 1
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise ValidationError(f"max_depth must be >= 1, got {self.max_depth}")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")
        if not 0 < self.subsample <= 1:
            raise ValidationError("subsample must be in (0, 1]")


@dataclass
class RegressionTree:
    """Flat array tree. ``feature[i] == -1`` marks a leaf."""

    feature: List[int] = field(default_factory=list)
    threshold: List[float] = field(default_factory=list)
    left: List[int] = field(default_factory=list)
    right: List[int] = field(default_factory=list)
    value: List[float] = field(default_factory=list)

    def _add(self, feature=-1, threshold=0.0, value=0.0) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            r = rows[inner]
            n = node[inner]
            go_left = X[r, f[inner]] <= threshold[n]
            node[inner] = np.where(go_left, left[n], right[n])
        return np.asarray(self.value)[node]

    def to_dict(self) -> dict:
        return asdict(self)


def best_split(X: np.ndarray, r: np.ndarray, min_samples_leaf: int):
    """Exact greedy split maximising the drop in squared error.

    Returns (feature, threshold, gain) or None. Rows with ``x <= threshold``
    go left. Ties resolve to the lowest feature index, then lowest threshold.
    """
    n = len(r)
    if n < 2 * min_samples_leaf:
        return None
    total = r.sum()
    base = total * total / n
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cs = np.cumsum(r[order])
        n_left = np.arange(1, n)
        s_left = cs[:-1]
        s_right = total - s_left
        gain = s_left ** 2 / n_left + s_right ** 2 / (n - n_left) - base
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_samples_leaf) & (n - n_left >= min_samples_leaf)
        if not valid.any():
            continue
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > _MIN_GAIN and (best is None or gain[i] > best[2]):
            lo, hi = xs[i], xs[i + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = (j, float(thr), float(gain[i]))
    return best


def build_tree(X: np.ndarray, r: np.ndarray, max_depth: int, min_samples_leaf: int) -> RegressionTree:
    tree = RegressionTree()

    def grow(rows: np.ndarray, depth: int) -> int:
        node = tree._add(value=float(np.mean(r[rows])))
        if depth >= max_depth:
            return node
        split = best_split(X[rows], r[rows], min_samples_leaf)
        if split is None:
            return node
        j, thr, _ = split
        mask = X[rows, j] <= thr
        tree.feature[node] = j
        tree.threshold[node] = thr
        tree.left[node] = grow(rows[mask], depth + 1)
        tree.right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(len(r)), 0)
    return tree


@dataclass
class GbtModel:
    config: GbtConfig
    base_score: float
    trees: List[RegressionTree]
    n_features: int
    history: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": 1,
            "config": asdict(self.config),
            "base_score": self.base_score,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValidationError(f"not a GBT model file (format={d.get('format')!r})")
        return cls(
            config=GbtConfig(**d["config"]),
            base_score=float(d["base_score"]),
            trees=[RegressionTree(**t) for t in d["trees"]],
            n_features=int(d["n_features"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _base_score(y: np.ndarray) -> float:
    # A constant target must be reproduced bit-exactly; np.mean may round.
    if np.all(y == y[0]):
        return float(y[0])
    return float(np.mean(y))


def gbt_predict(model: GbtModel, features, n_trees: Optional[int] = None) -> np.ndarray:
    X = as_matrix(features, "features")
    if X.shape[1] != model.n_features:
        raise ValidationError(f"model trained on {model.n_features} features, got {X.shape[1]}")
    out = np.full(X.shape[0], model.base_score)
    for tree in model.trees[:n_trees]:
        out += model.config.learning_rate * tree.predict(X)
    return out


def gbt_train(features, labels, train_idx=None, val_idx=None, config: GbtConfig = GbtConfig()) -> GbtModel:
    X = as_matrix(features, "features")
    y = as_vector(labels, "labels", length=X.shape[0], allow_nan=True)
    train_idx = np.arange(X.shape[0]) if train_idx is None else as_index(train_idx, X.shape[0], "train_idx")
    val_idx = as_index(val_idx, X.shape[0], "val_idx")
    if train_idx.size < 2:
        raise ValidationError(f"need at least 2 training rows, got {train_idx.size}")
    if not np.all(np.isfinite(y[train_idx])) or not np.all(np.isfinite(y[val_idx])):
        raise ValidationError("missing labels on training/validation rows")

    Xt, yt = X[train_idx], y[train_idx]
    Xv, yv = X[val_idx], y[val_idx]
    rng = np.random.default_rng(config.seed)
    base = _base_score(yt)
    model = GbtModel(config=config, base_score=base, trees=[], n_features=X.shape[1])
    f_train = np.full(len(yt), base)
    f_val = np.full(len(yv), base)
    n_sub = max(2, int(round(config.subsample * len(yt))))
    for t in range(config.n_trees):
        resid = yt - f_train
        rows = np.arange(len(yt))
        if config.subsample < 1.0:
            rows = np.sort(rng.choice(len(yt), size=n_sub, replace=False))
        tree = build_tree(Xt[rows], resid[rows], config.max_depth, config.min_samples_leaf)
        model.trees.append(tree)
        f_train += config.learning_rate * tree.predict(Xt)
        entry = {"tree": t, "train_mae": float(np.mean(np.abs(yt - f_train)))}
        if len(yv):
            f_val += config.learning_rate * tree.predict(Xv)
            entry["val_mae"] = float(np.mean(np.abs(yv - f_val)))
        model.history.append(entry)
    return model


class GbtRegressor(RegressorMixin, BaseEstimator):
    def __init__(self, n_trees=200, max_depth=3, learning_rate=0.1, min_samples_leaf=1, subsample=1.0, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_samples_leaf = min_samples_leaf
        self.subsample = subsample
        self.seed = seed

    def fit(self, X, y, eval_set=None):
        X = as_matrix(X)
        y = as_vector(y, length=X.shape[0])
        idx = np.arange(X.shape[0])
        val = None
        if eval_set is not None:
            Xv, yv = as_matrix(eval_set[0], n_columns=X.shape[1]), as_vector(eval_set[1])
            X = np.vstack([X, Xv])
            y = np.concatenate([y, yv])
            val = np.arange(len(idx), len(y))
        self.model_ = gbt_train(X, y, idx, val, GbtConfig(**self.get_params()))
        self.n_features_in_ = self.model_.n_features
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("GbtRegressor is not fitted yet")
        return gbt_predict(self.model_, X)

"""Single-frame cheat classifier: borderline minority oversampling plus
Newton-boosted regression trees on logistic loss.

Trees are grown by exact greedy search over all features and split points
(desk-scale data needs no histogram approximation).  Per boosting round a
depth-limited tree is fit to gradients g = p - y with hessians h = p(1-p);
leaf values are -sum(g) / (sum(h) + lambda) and the ensemble is combined
through a sigmoid on base log-odds plus learning-rate-scaled tree outputs.
Training is deterministic: splits tie-break to the lowest feature index
and position, and the only randomness (oversampling) is seeded.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import (
    NonFiniteFeature,
    SchemaMismatch,
    SingleClass,
    TooFewMinority,
)
from .features import SCHEMA_VERSION

logger = logging.getLogger(__name__)

_EPS = 1e-15


@dataclass(frozen=True)
class GBDTParams:
    n_trees: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    l2_lambda: float = 1.0

    def __post_init__(self):
        if self.n_trees < 0:
            raise SchemaMismatch("n_trees must be >= 0")
        if self.max_depth <= 0 or self.min_samples_leaf <= 0:
            raise SchemaMismatch("max_depth and min_samples_leaf must be positive")
        if not (0.0 < self.learning_rate <= 1.0):
            raise SchemaMismatch("learning_rate must be in (0, 1]")
        if self.l2_lambda < 0.0:
            raise SchemaMismatch("l2_lambda must be >= 0")


@dataclass
class RegressionTree:
    """Flattened depth-limited tree; feature < 0 marks a leaf node."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


@dataclass
class GBDTModel:
    base_score: float
    trees: list[RegressionTree]
    params: GBDTParams
    seed: int
    n_features: int
    schema_version: int = SCHEMA_VERSION
    threshold_opt: Optional[float] = None
    train_loss: list[float] = field(default_factory=list, repr=False)
    feature_gain: Optional[np.ndarray] = field(default=None, repr=False)
    _flat: Optional[tuple] = field(default=None, repr=False)

    def flattened(self):
        if self._flat is None:
            if self.trees:
                feat = np.concatenate([t.feature for t in self.trees])
                thr = np.concatenate([t.threshold for t in self.trees])
                value = np.concatenate([t.value for t in self.trees])
                sizes = [t.feature.size for t in self.trees]
                offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
                np.cumsum(sizes, out=offsets[1:])
                left = np.concatenate(
                    [t.left + off for t, off in zip(self.trees, offsets[:-1])]
                )
                right = np.concatenate(
                    [t.right + off for t, off in zip(self.trees, offsets[:-1])]
                )
                # leaf children stay -1 regardless of offset
                left[feat < 0] = -1
                right[feat < 0] = -1
            else:
                feat = np.empty(0, dtype=np.int64)
                thr = np.empty(0)
                value = np.empty(0)
                left = np.empty(0, dtype=np.int64)
                right = np.empty(0, dtype=np.int64)
                offsets = np.zeros(1, dtype=np.int64)
            self._flat = (feat, thr, left, right, value, offsets)
        return self._flat


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, _EPS, 1.0 - _EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _fit_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, params: GBDTParams,
              train_out: np.ndarray, gain_accum: np.ndarray) -> RegressionTree:
    lam = params.l2_lambda
    min_leaf = params.min_samples_leaf
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def grow(rows: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        if depth < params.max_depth and rows.size >= 2 * min_leaf:
            sub = X[rows]
            order = np.argsort(sub, axis=0, kind="stable")
            vals = np.take_along_axis(sub, order, axis=0)
            gain, j, pos = kernels.best_split(
                np.ascontiguousarray(vals),
                np.ascontiguousarray(g[rows][order]),
                np.ascontiguousarray(h[rows][order]),
                lam,
                min_leaf,
            )
            if gain > 1e-12:
                thr = 0.5 * (vals[pos - 1, j] + vals[pos, j])
                if thr <= vals[pos - 1, j]:  # midpoint collapsed by rounding
                    thr = vals[pos, j]
                feature[node] = int(j)
                threshold[node] = float(thr)
                gain_accum[j] += gain
                left[node] = grow(rows[order[:pos, j]], depth + 1)
                right[node] = grow(rows[order[pos:, j]], depth + 1)
                return node
        gs = float(g[rows].sum())
        hs = float(h[rows].sum())
        leaf = -gs / (hs + lam)
        value[node] = leaf
        train_out[rows] = leaf
        return node

    grow(np.arange(X.shape[0]), 0)
    return RegressionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value),
    )


def train_gbdt(X, y, params: GBDTParams = GBDTParams(), seed: int = 0) -> GBDTModel:
    """Fit the boosted ensemble; returns a model carrying its loss curve."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise SchemaMismatch(f"X {X.shape} does not match y {y.shape}")
    if not np.isfinite(X).all():
        raise NonFiniteFeature("training matrix contains NaN or inf")
    classes = np.unique(y)
    if classes.size != 2 or not np.isin(classes, (0.0, 1.0)).all():
        raise SingleClass(f"need binary labels with both classes, got {classes}")

    prior = float(np.clip(y.mean(), _EPS, 1.0 - _EPS))
    base = math.log(prior / (1.0 - prior))
    margin = np.full(y.size, base)
    trees: list[RegressionTree] = []
    losses: list[float] = [_log_loss(y, _sigmoid(margin))]
    gain_accum = np.zeros(X.shape[1])
    train_out = np.empty(y.size)
    for _ in range(params.n_trees):
        p = _sigmoid(margin)
        g = p - y
        h = p * (1.0 - p)
        tree = _fit_tree(X, g, h, params, train_out, gain_accum)
        trees.append(tree)
        margin += params.learning_rate * train_out
        losses.append(_log_loss(y, _sigmoid(margin)))
    return GBDTModel(
        base_score=base,
        trees=trees,
        params=params,
        seed=seed,
        n_features=X.shape[1],
        train_loss=losses,
        feature_gain=gain_accum,
    )


def predict_margin(model: GBDTModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X.reshape(1, -1)
    if X.shape[1] != model.n_features:
        raise SchemaMismatch(f"expected {model.n_features} features, got {X.shape[1]}")
    feat, thr, left, right, value, offsets = model.flattened()
    if model.trees:
        margin = model.base_score + model.params.learning_rate * kernels.forest_margin(
            feat, thr, left, right, value, offsets, X
        )
    else:
        margin = np.full(X.shape[0], model.base_score)
    return margin


def predict_proba(model: GBDTModel, X):
    """Cheating probability, strictly inside (0, 1)."""
    margin = predict_margin(model, X)
    p = np.clip(_sigmoid(margin), _EPS, 1.0 - _EPS)
    return float(p[0]) if np.asarray(X).ndim == 1 else p


# ---------------------------------------------------------------------------
# borderline minority oversampling
# ---------------------------------------------------------------------------

def _pairwise_dist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    aa = (A * A).sum(axis=1)[:, None]
    bb = (B * B).sum(axis=1)[None, :]
    d2 = aa + bb - 2.0 * (A @ B.T)
    return np.sqrt(np.maximum(d2, 0.0))


def borderline_smote(X, y, k: int = 5, seed: int = 0):
    """Oversample the minority class to parity using boundary samples only.

    A minority sample is in DANGER when at least k/2 but fewer than k of
    its k nearest neighbors (over the whole set, self excluded) belong to
    the majority class.  Synthetic rows interpolate between a DANGER
    sample and one of its k nearest minority neighbors with uniform
    weights.  Original rows are never modified; already balanced input or
    an empty DANGER set returns the data unchanged.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).ravel()
    if k < 1:
        raise SchemaMismatch(f"k must be >= 1, got {k}")
    classes, counts = np.unique(y, return_counts=True)
    if classes.size != 2:
        raise SingleClass(f"need exactly two classes, got {classes}")
    if counts[0] == counts[1]:
        logger.info("classes already balanced; oversampling is a no-op")
        return X.copy(), y.copy()
    min_label = classes[np.argmin(counts)]
    n_min = int(counts.min())
    n_maj = int(counts.max())
    if n_min <= k:
        raise TooFewMinority(f"minority count {n_min} must exceed k={k}")

    min_idx = np.where(y == min_label)[0]
    X_min = X[min_idx]

    d_all = _pairwise_dist(X_min, X)
    d_all[np.arange(n_min), min_idx] = np.inf  # exclude self
    nn_all = np.argsort(d_all, axis=1, kind="stable")[:, :k]
    maj_counts = (y[nn_all] != min_label).sum(axis=1)
    danger = np.where((maj_counts * 2 >= k) & (maj_counts < k))[0]
    if danger.size == 0:
        logger.warning("no boundary minority samples found; oversampling skipped")
        return X.copy(), y.copy()

    d_min = _pairwise_dist(X_min[danger], X_min)
    d_min[np.arange(danger.size), danger] = np.inf
    nn_min = np.argsort(d_min, axis=1, kind="stable")[:, :k]

    rng = np.random.default_rng(seed)
    n_new = n_maj - n_min
    base_pick = rng.integers(0, danger.size, n_new)
    nbr_pick = rng.integers(0, k, n_new)
    u = rng.random(n_new)
    X_base = X_min[danger[base_pick]]
    X_nbr = X_min[nn_min[base_pick, nbr_pick]]
    synth = X_base + u[:, None] * (X_nbr - X_base)
    return (
        np.vstack([X, synth]),
        np.concatenate([y, np.full(n_new, min_label, dtype=y.dtype)]),
    )


# ---------------------------------------------------------------------------
# threshold selection
# ---------------------------------------------------------------------------

def select_threshold(scores, labels) -> float:
    """Exhaustive F1-optimal threshold over candidate cut points.

    Candidates are the minimum score (everything predicted positive) plus
    the midpoints of consecutive unique scores.  Ties prefer higher
    precision, then the lower threshold.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    t = np.asarray(labels).ravel().astype(bool)
    if t.all() or not t.any():
        raise SingleClass("threshold selection needs both classes")
    uniq = np.unique(s)
    candidates = [float(uniq[0])]
    candidates += [float(0.5 * (a + b)) for a, b in zip(uniq[:-1], uniq[1:])]
    best = None
    for theta in candidates:
        pred = s >= theta
        tp = int((pred & t).sum())
        fp = int((pred & ~t).sum())
        fn = int((~pred & t).sum())
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        key = (f1, precision, -theta)
        if best is None or key > best[0]:
            best = (key, theta)
    return best[1]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_gbdt(model: GBDTModel, path) -> None:
    obj = {
        "kind": "gbdt",
        "schema_version": model.schema_version,
        "seed": model.seed,
        "base_score": model.base_score,
        "n_features": model.n_features,
        "threshold_opt": model.threshold_opt,
        "params": {
            "n_trees": model.params.n_trees,
            "max_depth": model.params.max_depth,
            "learning_rate": model.params.learning_rate,
            "min_samples_leaf": model.params.min_samples_leaf,
            "l2_lambda": model.params.l2_lambda,
        },
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            }
            for t in model.trees
        ],
    }
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_gbdt(path) -> GBDTModel:
    with open(str(path), "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("kind") != "gbdt":
        raise SchemaMismatch(f"{path} is not a gbdt model file")
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch(
            f"model schema_version {obj.get('schema_version')} != {SCHEMA_VERSION}"
        )
    trees = [
        RegressionTree(
            feature=np.asarray(t["feature"], dtype=np.int64),
            threshold=np.asarray(t["threshold"]),
            left=np.asarray(t["left"], dtype=np.int64),
            right=np.asarray(t["right"], dtype=np.int64),
            value=np.asarray(t["value"]),
        )
        for t in obj["trees"]
    ]
    return GBDTModel(
        base_score=obj["base_score"],
        trees=trees,
        params=GBDTParams(**obj["params"]),
        seed=obj["seed"],
        n_features=obj["n_features"],
        threshold_opt=obj["threshold_opt"],
    )

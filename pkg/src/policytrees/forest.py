"""Bagged CART forests: the in-process regressors/classifiers behind reward estimation.

The reward-estimation functions accept any learner exposing this module's
fit/predict surface, so boosting or external models can be plugged in; the
shipped implementation is a plain random forest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .data import as_float_matrix, as_float_vector
from .errors import ConfigError, InputError


@dataclass(frozen=True)
class ForestConfig:
    """Forest controls; ``mtry=None`` picks ceil(sqrt(p)) for classification
    and ceil(p/3) for regression."""

    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 5
    mtry: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 0:
            raise ConfigError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.mtry is not None and self.mtry < 1:
            raise ConfigError(f"mtry must be >= 1, got {self.mtry}")

    def resolved_mtry(self, p: int, task: str) -> int:
        if self.mtry is not None:
            if self.mtry > p:
                raise ConfigError(f"mtry={self.mtry} exceeds feature count {p}")
            return self.mtry
        if task == "classification":
            return min(p, math.ceil(math.sqrt(p)))
        return min(p, math.ceil(p / 3))

    def reseeded(self, seed: int) -> "ForestConfig":
        return replace(self, seed=int(seed))


@dataclass
class ForestModel:
    """Fitted forest; prediction is re-entrant and the model is immutable."""

    task: str
    n_features: int
    classes: tuple | None
    oob_score: float | None
    _feature: np.ndarray
    _threshold: np.ndarray
    _left: np.ndarray
    _right: np.ndarray
    _value: np.ndarray  # leaf means (regression) or class frequencies (classification)
    _roots: np.ndarray

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise InputError(f"features must be 2-dimensional, got shape {X.shape}")
        if X.shape[0] > 0:
            X = as_float_matrix(X, "features")
        if X.shape[1] != self.n_features:
            raise InputError(
                f"features have {X.shape[1]} columns, model expects {self.n_features}"
            )
        return np.ascontiguousarray(X)

    def predict(self, X) -> np.ndarray:
        """Mean over per-tree leaf means (regression only)."""
        if self.task != "regression":
            raise InputError("predict() is for regression models; use predict_proba()")
        X = self._check(X)
        if X.shape[0] == 0:
            return np.empty(0)
        return _kernels.forest_predict_reg(
            X, self._feature, self._threshold, self._left, self._right, self._value, self._roots
        )

    def predict_proba(self, X) -> np.ndarray:
        """Row-stochastic class probabilities via soft voting (classification only)."""
        if self.task != "classification":
            raise InputError("predict_proba() is for classification models; use predict()")
        X = self._check(X)
        K = len(self.classes)
        if X.shape[0] == 0:
            return np.empty((0, K))
        return _kernels.forest_predict_clf(
            X, self._feature, self._threshold, self._left, self._right, self._value, self._roots, K
        )


def _tree_seeds(seed: int, n_trees: int) -> np.ndarray:
    # counter-based per-tree streams: tree t is reproducible on its own
    state = np.random.SeedSequence(seed).generate_state(n_trees, dtype=np.uint32)
    return (state & 0x7FFFFFFF).astype(np.int64)


def _assemble(parts):
    feats, thrs, lefts, rights, values, roots = [], [], [], [], [], []
    offset = 0
    for feature, threshold, left, right, value in parts:
        feats.append(feature)
        thrs.append(threshold)
        lefts.append(np.where(left >= 0, left + offset, -1))
        rights.append(np.where(right >= 0, right + offset, -1))
        values.append(value)
        roots.append(offset)
        offset += feature.shape[0]
    return (
        np.concatenate(feats),
        np.concatenate(thrs),
        np.concatenate(lefts),
        np.concatenate(rights),
        np.concatenate(values) if values[0].ndim == 1 else np.vstack(values),
        np.asarray(roots, np.int64),
    )


def fit_regressor(X, y, cfg: ForestConfig = ForestConfig()) -> ForestModel:
    """Bagged variance-reduction trees; deterministic given ``cfg.seed``."""
    X = np.ascontiguousarray(as_float_matrix(X, "features"))
    y = as_float_vector(y, "targets")
    n, p = X.shape
    if y.shape[0] != n:
        raise InputError(f"targets have {y.shape[0]} rows but features have {n}")
    if n < 2:
        raise InputError(f"need at least 2 rows to fit a regressor, got {n}")
    mtry = cfg.resolved_mtry(p, "regression")
    seeds = _tree_seeds(cfg.seed, cfg.n_trees)
    parts, inbags = [], []
    for s in seeds:
        *arrs, inbag = _kernels.build_reg_tree(
            X, y, cfg.max_depth, cfg.min_leaf, mtry, cfg.bootstrap, int(s)
        )
        parts.append(tuple(arrs))
        inbags.append(inbag)
    feature, threshold, left, right, value, roots = _assemble(parts)
    oob = _oob_regression(X, y, parts, inbags) if cfg.bootstrap else None
    return ForestModel(
        task="regression",
        n_features=p,
        classes=None,
        oob_score=oob,
        _feature=feature,
        _threshold=threshold,
        _left=left,
        _right=right,
        _value=value,
        _roots=roots,
    )


def fit_classifier(X, labels, cfg: ForestConfig = ForestConfig(), classes=None) -> ForestModel:
    """Bagged Gini trees with soft-voting probabilities.

    ``classes`` fixes the probability-column order; by default the sorted
    distinct labels are used. A single observed class yields a degenerate
    model that predicts that class with probability 1.
    """
    X = np.ascontiguousarray(as_float_matrix(X, "features"))
    labels = np.asarray(labels)
    n, p = X.shape
    if labels.ndim != 1 or labels.shape[0] != n:
        raise InputError("labels must be a vector matching the feature rows")
    if classes is None:
        classes = tuple(sorted(set(labels.tolist())))
    else:
        classes = tuple(classes)
        missing = set(labels.tolist()) - set(classes)
        if missing:
            raise InputError(f"labels outside the declared classes: {sorted(missing)}")
    index = {c: k for k, c in enumerate(classes)}
    encoded = np.array([index[v] for v in labels.tolist()], dtype=np.int64)
    K = len(classes)
    mtry = cfg.resolved_mtry(p, "classification")
    seeds = _tree_seeds(cfg.seed, cfg.n_trees)
    parts, inbags = [], []
    for s in seeds:
        *arrs, inbag = _kernels.build_clf_tree(
            X, encoded, K, cfg.max_depth, cfg.min_leaf, mtry, cfg.bootstrap, int(s)
        )
        parts.append(tuple(arrs))
        inbags.append(inbag)
    feature, threshold, left, right, probs, roots = _assemble(parts)
    oob = _oob_classification(X, encoded, K, parts, inbags) if cfg.bootstrap else None
    return ForestModel(
        task="classification",
        n_features=p,
        classes=classes,
        oob_score=oob,
        _feature=feature,
        _threshold=threshold,
        _left=left,
        _right=right,
        _value=probs,
        _roots=roots,
    )


def _oob_regression(X, y, parts, inbags) -> float | None:
    n = X.shape[0]
    acc = np.zeros(n)
    hits = np.zeros(n)
    for inbag, part in zip(inbags, parts):
        mask = inbag == 0
        if not mask.any():
            continue
        feature, threshold, left, right, value = part
        pred = _kernels.forest_predict_reg(
            X[mask], feature, threshold, left, right, value, np.zeros(1, np.int64)
        )
        acc[mask] += pred
        hits[mask] += 1
    seen = hits > 0
    if not seen.any():
        return None
    resid = y[seen] - acc[seen] / hits[seen]
    denom = float(np.var(y[seen]))
    if denom == 0.0:
        return 1.0 if np.allclose(resid, 0) else 0.0
    return float(1.0 - np.mean(resid**2) / denom)


def _oob_classification(X, encoded, K, parts, inbags) -> float | None:
    n = X.shape[0]
    acc = np.zeros((n, K))
    hits = np.zeros(n)
    for inbag, part in zip(inbags, parts):
        mask = inbag == 0
        if not mask.any():
            continue
        feature, threshold, left, right, probs = part
        pred = _kernels.forest_predict_clf(
            X[mask], feature, threshold, left, right, probs, np.zeros(1, np.int64), K
        )
        acc[mask] += pred
        hits[mask] += 1
    seen = hits > 0
    if not seen.any():
        return None
    return float(np.mean(np.argmax(acc[seen], axis=1) == encoded[seen]))

"""CART regression tree with variance-reduction splits.

Numeric splits are ``x < t`` (left) / ``x >= t`` (right) with ``t`` the
midpoint of consecutive distinct values; categorical splits are one level
against the rest. Among equally good splits the earliest attribute wins, then
the smaller threshold (or level token).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int


@dataclass(frozen=True)
class Split:
    attribute: str
    kind: str  # "numeric" | "categorical"
    value: object  # threshold or level token

    def goes_left(self, column: pd.Series) -> np.ndarray:
        if self.kind == "numeric":
            return column.to_numpy(dtype=float) < self.value
        return column.astype(str).to_numpy() == self.value

    def __str__(self):
        if self.kind == "numeric":
            return f"{self.attribute} < {self.value!r}"
        return f"{self.attribute} = {self.value}"


@dataclass
class Node:
    id: int
    depth: int
    count: int
    prediction: float
    variance: float
    split: Optional[Split] = None
    left: Optional["Node"] = None
    right: Optional["Node"] = None
    gain: float = 0.0

    @property
    def is_leaf(self):
        return self.split is None

    def to_dict(self):
        out = {"id": self.id, "depth": self.depth, "count": self.count,
               "prediction": self.prediction, "variance": self.variance}
        if self.split is not None:
            out["split"] = {"attribute": self.split.attribute, "kind": self.split.kind,
                            "value": self.split.value, "gain": self.gain}
            out["left"] = self.left.to_dict()
            out["right"] = self.right.to_dict()
        return out


def _exact_mean(y):
    return math.fsum(y) / len(y)


def _is_categorical(series):
    return not pd.api.types.is_numeric_dtype(series) or pd.api.types.is_bool_dtype(series)


def best_numeric_split(x, y, min_leaf):
    """Best ``x < t`` split as ``(gain, t)`` or ``None``.

    ``y`` should be centred; gains are parent SSE minus child SSEs.
    """
    n = len(x)
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    s1 = np.cumsum(ys)
    s2 = np.cumsum(ys * ys)
    tot1, tot2 = s1[-1], s2[-1]
    i = np.arange(min_leaf, n - min_leaf + 1)  # size of the left child
    if i.size == 0:
        return None
    i = i[xs[i - 1] < xs[i]]
    if i.size == 0:
        return None
    left1, left2 = s1[i - 1], s2[i - 1]
    right1, right2 = tot1 - left1, tot2 - left2
    sse_parent = tot2 - tot1 * tot1 / n
    sse_children = (left2 - left1 * left1 / i) + (right2 - right1 * right1 / (n - i))
    gains = sse_parent - sse_children
    j = int(np.argmax(gains))  # first maximum == smallest threshold
    lo, hi = xs[i[j] - 1], xs[i[j]]
    t = (lo + hi) / 2.0
    if not lo < t <= hi:
        t = hi
    return float(gains[j]), float(t)


def best_categorical_split(x, y, min_leaf):
    """Best one-level-vs-rest split as ``(gain, level)`` or ``None``."""
    n = len(x)
    levels, codes = np.unique(x, return_inverse=True)
    cnt = np.bincount(codes, minlength=len(levels)).astype(float)
    s1 = np.bincount(codes, weights=y, minlength=len(levels))
    tot1 = float(y.sum())
    tot2 = float((y * y).sum())
    s2 = np.bincount(codes, weights=y * y, minlength=len(levels))
    ok = (cnt >= min_leaf) & (n - cnt >= min_leaf)
    if not ok.any():
        return None
    sse_parent = tot2 - tot1 * tot1 / n
    with np.errstate(divide="ignore", invalid="ignore"):
        sse = (s2 - s1 * s1 / cnt) + ((tot2 - s2) - (tot1 - s1) ** 2 / (n - cnt))
    gains = np.where(ok, sse_parent - sse, -np.inf)
    j = int(np.argmax(gains))
    return float(gains[j]), str(levels[j])


class RegressionTree(RegressorMixin, BaseEstimator):
    """Least-squares regression tree.

    Parameters
    ----------
    min_leaf : int
        Minimum number of training rows in every leaf.
    max_depth : int
        Maximum depth; the root has depth 0.
    """

    def __init__(self, min_leaf=25, max_depth=6):
        self.min_leaf = min_leaf
        self.max_depth = max_depth

    def fit(self, X, y):
        min_leaf = check_positive_int(self.min_leaf, "min_leaf")
        max_depth = check_positive_int(self.max_depth, "max_depth", minimum=0)
        X = _as_frame(X)
        y = np.asarray(y, dtype=float)
        if len(X) == 0:
            raise ValueError("cannot learn a tree from an empty input")
        if len(X) != len(y):
            raise ValueError("X and y have different lengths")
        if not np.all(np.isfinite(y)):
            raise ValueError("labels must be finite")
        if len(y) < min_leaf:
            raise ValueError(f"need at least min_leaf={min_leaf} records, got {len(y)}")
        self.feature_names_in_ = np.asarray(X.columns, dtype=object)
        self.n_features_in_ = X.shape[1]
        self.kinds_ = {}
        self.levels_ = {}
        cols = {}
        for name in X.columns:
            s = X[name]
            if _is_categorical(s):
                self.kinds_[name] = "categorical"
                if isinstance(s.dtype, pd.CategoricalDtype):
                    self.levels_[name] = tuple(str(c) for c in s.cat.categories)
                else:
                    self.levels_[name] = tuple(sorted(s.astype(str).unique()))
                cols[name] = s.astype(str).to_numpy()
            else:
                self.kinds_[name] = "numeric"
                cols[name] = s.to_numpy(dtype=float)
        self._next_id = 0
        self.tree_ = self._grow(cols, y, np.arange(len(y)), 0, min_leaf, max_depth)
        del self._next_id
        self.leaves_ = [n for n in _walk(self.tree_) if n.is_leaf]
        return self

    def _grow(self, cols, y, idx, depth, min_leaf, max_depth):
        yy = y[idx]
        mean = _exact_mean(yy)
        node = Node(self._next_id, depth, len(idx), mean, float(np.var(yy)))
        self._next_id += 1
        if depth >= max_depth or len(idx) < 2 * min_leaf or np.all(yy == yy[0]):
            return node
        centred = yy - mean
        sse_parent = float(centred @ centred)
        tol = 1e-12 * max(1.0, sse_parent)
        best = None
        for name in self.feature_names_in_:
            x = cols[name][idx]
            if self.kinds_[name] == "numeric":
                found = best_numeric_split(x, centred, min_leaf)
            else:
                found = best_categorical_split(x, centred, min_leaf)
            if found is None:
                continue
            gain, value = found
            if best is None or gain > best[0] + tol:
                best = (gain, Split(name, self.kinds_[name], value))
        if best is None or best[0] <= tol:
            return node
        gain, split = best
        x = cols[split.attribute][idx]
        left = x < split.value if split.kind == "numeric" else x == split.value
        node.split = split
        node.gain = gain
        node.left = self._grow(cols, y, idx[left], depth + 1, min_leaf, max_depth)
        node.right = self._grow(cols, y, idx[~left], depth + 1, min_leaf, max_depth)
        return node

    def apply(self, X):
        """Leaf node id for every row."""
        check_is_fitted(self, "tree_")
        X = _as_frame(X)
        out = np.empty(len(X), dtype=np.int64)
        self._route(self.tree_, X, np.arange(len(X)), out, lambda n: n.id)
        return out

    def predict(self, X):
        check_is_fitted(self, "tree_")
        X = _as_frame(X)
        out = np.empty(len(X), dtype=float)
        self._route(self.tree_, X, np.arange(len(X)), out, lambda n: n.prediction)
        return out

    def _route(self, node, X, idx, out, value):
        if node.is_leaf:
            out[idx] = value(node)
            return
        left = node.split.goes_left(X[node.split.attribute].iloc[idx])
        self._route(node.left, X, idx[left], out, value)
        self._route(node.right, X, idx[~left], out, value)

    def paths(self):
        """``(leaf, [(split, went_left), ...])`` for every leaf, left to right."""
        check_is_fitted(self, "tree_")
        out = []

        def rec(node, path):
            if node.is_leaf:
                out.append((node, list(path)))
                return
            rec(node.left, path + [(node.split, True)])
            rec(node.right, path + [(node.split, False)])

        rec(self.tree_, [])
        return out

    def to_dict(self):
        check_is_fitted(self, "tree_")
        return {"params": self.get_params(), "kinds": dict(self.kinds_),
                "levels": {k: list(v) for k, v in self.levels_.items()},
                "root": self.tree_.to_dict()}


def _walk(node):
    yield node
    if not node.is_leaf:
        yield from _walk(node.left)
        yield from _walk(node.right)


def _as_frame(X):
    if isinstance(X, pd.DataFrame):
        return X.reset_index(drop=True)
    arr = np.asarray(X)
    if arr.ndim == 1:
        arr = arr[:, None]
    return pd.DataFrame(arr, columns=[f"x{j}" for j in range(arr.shape[1])])


def learn_tree(records, labels, min_leaf=25, max_depth=6, attributes=None) -> RegressionTree:
    """Fit a tree on records (Record list or covariate frame) labelled with ``labels``.

    ``attributes`` restricts the candidate split attributes (default: all).
    """
    if isinstance(records, pd.DataFrame):
        X = records
    else:
        records = list(records)
        if not records:
            raise ValueError("cannot learn a tree from an empty input")
        from .dataset import Record

        if isinstance(records[0], Record):
            X = pd.DataFrame([r.values for r in records])
        else:
            X = pd.DataFrame(records)
    if attributes is not None:
        X = X[list(attributes)]
    return RegressionTree(min_leaf=min_leaf, max_depth=max_depth).fit(X, labels)

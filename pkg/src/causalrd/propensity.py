"""Propensity of belonging to the protected group.

Covariates are chosen by information gain against both the group and the
decision, proxies of the group are dropped, and a logistic model is fitted by
batch gradient ascent. Scores are clipped to ``[eps, 1 - eps]`` so that the
weights ``e / (1 - e)`` stay finite and positive.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_clip_epsilon, check_dataset, check_positive_int
from .dataset import NUMERIC, Dataset, Record
from .exceptions import FitError, SelectionError

logger = logging.getLogger(__name__)

DEFAULT_CLIP = 0.01


# -- information gain -------------------------------------------------------

def entropy(codes) -> float:
    """Shannon entropy in bits of a discrete sample."""
    codes = np.asarray(codes)
    if codes.size == 0:
        return 0.0
    _, counts = np.unique(codes, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def conditional_entropy(target, given) -> float:
    target = np.asarray(target)
    given = np.asarray(given)
    n = len(target)
    if n == 0:
        return 0.0
    h = 0.0
    for level in np.unique(given):
        mask = given == level
        h += mask.sum() / n * entropy(target[mask])
    return h


def equal_frequency_bins(values, n_bins=10) -> np.ndarray:
    """Bin codes from the empirical deciles (or ``n_bins`` quantiles).

    Bin ``b`` holds values in ``(edge[b-1], edge[b]]``; equal values always
    share a bin, so heavily tied columns get fewer bins.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values.astype(np.int64)
    qs = np.linspace(0, 1, n_bins + 1)[1:-1]
    edges = np.unique(np.quantile(values, qs))
    return np.searchsorted(edges, values, side="left")


def discretize(dataset: Dataset, attr: str, n_bins=10) -> np.ndarray:
    if attr not in dataset.table.columns:
        raise KeyError(f"unknown attribute {attr!r}")
    col = dataset.table[attr]
    if dataset.kind_of(attr) == NUMERIC:
        return equal_frequency_bins(col.to_numpy(dtype=float), n_bins)
    return pd.Categorical(col.astype(str)).codes


def _target_codes(dataset, target):
    if target == "group":
        return dataset.protected.astype(np.int64)
    if target == "decision":
        return dataset.positive.astype(np.int64)
    raise ValueError(f"target must be 'group' or 'decision', got {target!r}")


def information_gain(dataset: Dataset, attr: str, target: str, n_bins=10) -> float:
    """``H(target) - H(target | attr)`` in bits."""
    check_dataset(dataset, nonempty=True)
    x = discretize(dataset, attr, n_bins)
    y = _target_codes(dataset, target)
    return max(0.0, entropy(y) - conditional_entropy(y, x))


def symmetric_uncertainty(x, y) -> float:
    hx, hy = entropy(x), entropy(y)
    if hx + hy == 0:
        return 0.0
    ig = hy - conditional_entropy(y, x)
    return float(2.0 * ig / (hx + hy))


# -- covariate selection ----------------------------------------------------

@dataclass
class CovariateSelection:
    selected: list
    dropped_proxies: dict
    ig_group: dict
    ig_decision: dict
    group_association: dict = field(default_factory=dict)
    status: dict = field(default_factory=dict)

    def report(self) -> pd.DataFrame:
        rows = [
            {"attr": a, "ig_group": self.ig_group[a], "ig_decision": self.ig_decision[a],
             "group_association": self.group_association.get(a, float("nan")),
             "status": self.status[a]}
            for a in self.ig_group
        ]
        return pd.DataFrame(rows, columns=["attr", "ig_group", "ig_decision",
                                           "group_association", "status"])


def _top_half(scores: dict) -> set:
    vals = sorted(scores.values(), reverse=True)
    cutoff = vals[math.ceil(len(vals) / 2) - 1]
    return {a for a, v in scores.items() if v >= cutoff}


def select_covariates(dataset: Dataset, proxy_threshold=0.95, n_bins=10,
                      exclude=(), include=()) -> CovariateSelection:
    """Covariates in the top half by IG against both group and decision.

    Attributes whose symmetric uncertainty with the group exceeds
    ``proxy_threshold`` are dropped as proxies. ``exclude`` and ``include``
    are manual overrides applied last (exclusion wins).
    """
    check_dataset(dataset, nonempty=True)
    names = dataset.covariate_names
    if len(names) < 2:
        raise SelectionError(f"need at least 2 covariates, have {len(names)}")
    unknown = [a for a in list(exclude) + list(include) if a not in names]
    if unknown:
        raise SelectionError(f"override names are not covariates: {unknown}")

    ig_g = {a: information_gain(dataset, a, "group", n_bins) for a in names}
    ig_d = {a: information_gain(dataset, a, "decision", n_bins) for a in names}
    group_codes = _target_codes(dataset, "group")
    su = {a: symmetric_uncertainty(discretize(dataset, a, n_bins), group_codes) for a in names}
    top_g, top_d = _top_half(ig_g), _top_half(ig_d)

    selected, proxies, status = [], {}, {}
    for a in names:
        if a in exclude:
            status[a] = "excluded"
        elif a in include:
            status[a] = "included"
            selected.append(a)
        elif a not in top_g and a not in top_d:
            status[a] = "low-ig-both"
        elif a not in top_g:
            status[a] = "low-ig-group"
        elif a not in top_d:
            status[a] = "low-ig-decision"
        elif su[a] > proxy_threshold:
            status[a] = "proxy"
            proxies[a] = su[a]
        else:
            status[a] = "selected"
            selected.append(a)
    if not selected:
        raise SelectionError(
            "no covariate passed selection; choose covariates manually with include=[...]")
    return CovariateSelection(selected, proxies, ig_g, ig_d, su, status)


class CovariateSelector(TransformerMixin, BaseEstimator):
    """Estimator wrapper of :func:`select_covariates`; ``transform`` keeps selected columns."""

    def __init__(self, proxy_threshold=0.95, n_bins=10, exclude=(), include=()):
        self.proxy_threshold = proxy_threshold
        self.n_bins = n_bins
        self.exclude = exclude
        self.include = include

    def fit(self, X, y=None):
        self.selection_ = select_covariates(X, self.proxy_threshold, self.n_bins,
                                            tuple(self.exclude), tuple(self.include))
        self.selected_ = list(self.selection_.selected)
        return self

    def transform(self, X):
        check_is_fitted(self, "selected_")
        if isinstance(X, Dataset):
            return X.table[self.selected_].copy()
        return X[self.selected_]


# -- logistic model ---------------------------------------------------------

def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _penalty_mask(n_features, intercept=True):
    mask = np.ones(n_features)
    if intercept and n_features:
        mask[0] = 0.0
    return mask


def penalized_log_likelihood(beta, design, y, l2, intercept=True) -> float:
    """Mean Bernoulli log-likelihood minus ``l2/2 * ||beta||^2`` (intercept unpenalized)."""
    z = design @ beta
    ll = np.mean(y * z - np.logaddexp(0.0, z))
    mask = _penalty_mask(len(beta), intercept)
    return float(ll - 0.5 * l2 * np.sum(mask * beta * beta))


def log_likelihood_gradient(beta, design, y, l2, intercept=True) -> np.ndarray:
    z = design @ beta
    grad = design.T @ (y - sigmoid(z)) / len(y)
    return grad - l2 * _penalty_mask(len(beta), intercept) * beta


def gradient_ascent(design, y, l2=1e-4, max_iter=1000, tol=1e-6, beta0=None,
                    intercept=True):
    """Maximise the penalized log-likelihood by batch gradient ascent.

    Each step starts from a Barzilai-Borwein step length and backtracks until
    the Armijo condition holds, so the objective never decreases. Returns
    ``(beta, meta)`` where ``meta`` has ``iterations``, ``log_likelihood``,
    ``converged`` and the objective ``history``.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.zeros(design.shape[1]) if beta0 is None else np.array(beta0, dtype=float)
    f = penalized_log_likelihood(beta, design, y, l2, intercept)
    if not np.isfinite(f):
        raise FitError("non-finite log-likelihood at the starting point")
    g = log_likelihood_gradient(beta, design, y, l2, intercept)
    history = [f]
    step = 1.0
    it = 0
    converged = bool(np.max(np.abs(g), initial=0.0) < tol)
    while not converged and it < max_iter:
        gg = float(g @ g)
        for _ in range(60):
            cand = beta + step * g
            fc = penalized_log_likelihood(cand, design, y, l2, intercept)
            if np.isfinite(fc) and fc >= f + 1e-4 * step * gg:
                break
            step *= 0.5
        else:
            # no ascent step left at double precision
            break
        it += 1
        g_new = log_likelihood_gradient(cand, design, y, l2, intercept)
        s_k, y_k = cand - beta, g_new - g
        curv = -float(s_k @ y_k)
        step = float(s_k @ s_k) / curv if curv > 0 else 2.0 * step
        beta, f, g = cand, fc, g_new
        history.append(f)
        converged = bool(np.max(np.abs(g), initial=0.0) < tol)
    meta = {"iterations": it, "log_likelihood": f, "converged": converged,
            "history": history}
    return beta, meta


@dataclass(frozen=True)
class BasisFeature:
    """One column of the design matrix.

    ``kind`` is ``intercept``, ``indicator`` (``attribute == level``),
    ``numeric`` (pass-through) or ``threshold`` (``attribute >= value``).
    """

    kind: str
    attribute: str | None = None
    level: str | None = None
    value: float | None = None

    def evaluate(self, X: pd.DataFrame) -> np.ndarray:
        n = len(X)
        if self.kind == "intercept":
            return np.ones(n)
        col = X[self.attribute]
        if self.kind == "indicator":
            return (col.astype(str).to_numpy() == self.level).astype(float)
        if self.kind == "numeric":
            return col.to_numpy(dtype=float)
        if self.kind == "threshold":
            return (col.to_numpy(dtype=float) >= self.value).astype(float)
        raise ValueError(f"unknown basis kind {self.kind!r}")

    def to_dict(self):
        return {k: v for k, v in
                (("kind", self.kind), ("attribute", self.attribute),
                 ("level", self.level), ("value", self.value)) if v is not None}

    def __str__(self):
        if self.kind == "intercept":
            return "(intercept)"
        if self.kind == "indicator":
            return f"{self.attribute}={self.level}"
        if self.kind == "threshold":
            return f"{self.attribute}>={self.value!r}"
        return self.attribute


def _is_categorical(series):
    return not pd.api.types.is_numeric_dtype(series) or pd.api.types.is_bool_dtype(series)


def build_basis(X: pd.DataFrame, binarize_numeric=False) -> list[BasisFeature]:
    """Intercept, one indicator per non-reference level, one feature per numeric."""
    basis = [BasisFeature("intercept")]
    for name in X.columns:
        col = X[name]
        if _is_categorical(col):
            counts = col.astype(str).value_counts()
            # reference level: most frequent, ties to the smallest token
            top = counts.max()
            ref = min(lvl for lvl, c in counts.items() if c == top)
            basis.extend(BasisFeature("indicator", name, lvl)
                         for lvl in sorted(counts.index) if lvl != ref)
        elif binarize_numeric:
            basis.append(BasisFeature("threshold", name, value=float(np.median(col))))
        else:
            basis.append(BasisFeature("numeric", name))
    return basis


def _as_frame(X):
    if isinstance(X, pd.DataFrame):
        return X
    if isinstance(X, Dataset):
        return X.table
    if isinstance(X, Record):
        return pd.DataFrame([X.values])
    arr = np.asarray(X)
    if arr.ndim == 1:
        arr = arr[None, :]
    return pd.DataFrame(arr, columns=[f"x{j}" for j in range(arr.shape[1])])


class PropensityModel(ClassifierMixin, BaseEstimator):
    """Logistic regression of group membership fitted by gradient ascent.

    Parameters
    ----------
    l2 : float
        Ridge penalty on the mean log-likelihood (intercept not penalized).
    max_iter : int
        Iteration cap for gradient ascent.
    tol : float
        Stop when the max-norm of the gradient falls below this.
    clip_epsilon : float
        Scores are clipped to ``[clip_epsilon, 1 - clip_epsilon]``.
    binarize_numeric : bool
        Replace each numeric covariate by an indicator of ``x >= median``.

    Accepts pandas frames with mixed column types; object/category columns
    are one-hot encoded with the most frequent level as reference.
    """

    def __init__(self, l2=1e-4, max_iter=1000, tol=1e-6, clip_epsilon=DEFAULT_CLIP,
                 binarize_numeric=False):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol
        self.clip_epsilon = clip_epsilon
        self.binarize_numeric = binarize_numeric

    def fit(self, X, y):
        check_clip_epsilon(self.clip_epsilon)
        max_iter = check_positive_int(self.max_iter, "max_iter", minimum=0)
        X = _as_frame(X)
        y = np.asarray(y)
        if len(X) != len(y):
            raise ValueError("X and y have different lengths")
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise FitError(f"need exactly two groups to fit, found {len(self.classes_)}")
        target = (y == self.classes_[1]).astype(float)
        self.feature_names_in_ = np.asarray(X.columns, dtype=object)
        self.basis_ = build_basis(X, self.binarize_numeric)
        design = self._design(X)
        self.coef_, meta = gradient_ascent(design, target, self.l2, max_iter, self.tol)
        self.n_iter_ = meta["iterations"]
        self.training_meta_ = meta
        if not meta["converged"] and max_iter > 0:
            logger.warning("propensity model did not converge in %d iterations", max_iter)
        return self

    def _design(self, X):
        X = _as_frame(X)
        return np.column_stack([b.evaluate(X) for b in self.basis_])

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return self._design(X) @ self.coef_

    def propensity(self, X):
        """Clipped probability of the second class (the protected group)."""
        eps = self.clip_epsilon
        return np.clip(sigmoid(self.decision_function(X)), eps, 1.0 - eps)

    def predict_proba(self, X):
        e = self.propensity(X)
        return np.column_stack([1.0 - e, e])

    def predict(self, X):
        return self.classes_[(self.propensity(X) > 0.5).astype(int)]

    # dump / restore

    def to_dict(self):
        check_is_fitted(self, "coef_")
        meta = {k: v for k, v in self.training_meta_.items() if k != "history"}
        return {
            "params": self.get_params(),
            "classes": [_py(c) for c in self.classes_],
            "basis": [b.to_dict() for b in self.basis_],
            "beta": [float(b) for b in self.coef_],
            "training_meta": meta,
        }

    @classmethod
    def from_dict(cls, doc):
        model = cls(**doc["params"])
        model.classes_ = np.asarray(doc["classes"])
        model.basis_ = [BasisFeature(**b) for b in doc["basis"]]
        model.coef_ = np.asarray(doc["beta"], dtype=float)
        model.training_meta_ = dict(doc.get("training_meta", {}))
        model.n_iter_ = model.training_meta_.get("iterations", 0)
        attrs = [b.attribute for b in model.basis_ if b.attribute is not None]
        model.feature_names_in_ = np.asarray(list(dict.fromkeys(attrs)), dtype=object)
        return model

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def _py(v):
    return v.item() if isinstance(v, np.generic) else v


# convenience name matching the domain vocabulary
LogisticModel = PropensityModel


def fit_propensity(dataset: Dataset, selection, l2=1e-4, max_iters=1000, tol=1e-6,
                   clip_epsilon=DEFAULT_CLIP, binarize_numeric=False) -> PropensityModel:
    """Fit ``Pr(protected | selected covariates)`` on the whole dataset."""
    check_dataset(dataset, nonempty=True)
    selected = selection.selected if isinstance(selection, CovariateSelection) else list(selection)
    if not selected:
        raise SelectionError("empty covariate selection")
    n_prot = int(dataset.protected.sum())
    if n_prot == 0 or n_prot == len(dataset):
        raise FitError("dataset contains a single group; cannot fit a propensity model")
    model = PropensityModel(l2=l2, max_iter=max_iters, tol=tol, clip_epsilon=clip_epsilon,
                            binarize_numeric=binarize_numeric)
    return model.fit(dataset.table[selected], dataset.protected)


def propensity_score(model: PropensityModel, r) -> float:
    """Clipped propensity of a single record (or mapping of attribute values)."""
    if isinstance(r, Record):
        frame = pd.DataFrame([r.values])
    else:
        frame = pd.DataFrame([dict(r)])
    return float(model.propensity(frame)[0])


def weight_of(e):
    """Propensity weight ``e / (1 - e)``; the constant factor cancels downstream."""
    e_arr = np.asarray(e, dtype=float)
    if np.any((e_arr <= 0) | (e_arr >= 1)):
        raise ValueError("propensity must lie strictly inside (0, 1); clip it first")
    w = e_arr / (1.0 - e_arr)
    return float(w) if np.ndim(e) == 0 else w

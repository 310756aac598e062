"""Per-individual causal scoring, flagging and rule extraction.

Every record gets the risk difference of its kset and the causal risk
difference ``rd_causal``. Its *disadvantage* is ``rd_causal`` for protected
records and ``-rd_causal`` for unprotected ones. With threshold ``alpha``:

* negative decision and disadvantage ``> alpha``  -> ``discriminated``
* positive decision and disadvantage ``<= -alpha`` -> ``favored``
* otherwise ``neither``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (check_alpha, check_dataset, check_fallback,
                          check_max_distance, check_positive_int)
from .dataset import (NEGATIVE, POSITIVE, PROTECTED, UNPROTECTED, Dataset, MinMaxNormalizer,
                      base_rates)
from .measures import contingency, p1_of, p2_of, weighted_negative_rate
from .neighborhood import iter_ksets
from .propensity import PropensityModel, select_covariates, weight_of

DISCRIMINATED = "discriminated"
FAVORED = "favored"
NEITHER = "neither"

SCORE_COLUMNS = ["id", "group", "decision", "propensity", "rd", "rd_causal",
                 "disadvantage", "flag"]


@dataclass(frozen=True)
class IndividualScore:
    id: int
    group: str
    decision: str
    propensity: float
    rd: float
    rd_causal: float
    disadvantage: float
    flag: str = NEITHER


def disadvantage_of(group, rd_causal):
    return rd_causal if group == PROTECTED else -rd_causal


def classify(score: IndividualScore, alpha) -> str:
    alpha = check_alpha(alpha)
    if score.decision == NEGATIVE and score.disadvantage > alpha:
        return DISCRIMINATED
    if score.decision == POSITIVE and score.disadvantage <= -alpha:
        return FAVORED
    return NEITHER


def classify_arrays(positive, disadvantage, alpha) -> np.ndarray:
    """Vectorised :func:`classify`."""
    alpha = check_alpha(alpha)
    positive = np.asarray(positive, dtype=bool)
    disadvantage = np.asarray(disadvantage, dtype=float)
    out = np.full(len(positive), NEITHER, dtype=object)
    out[~positive & (disadvantage > alpha)] = DISCRIMINATED
    out[positive & (disadvantage <= -alpha)] = FAVORED
    return out


def score_all(dataset: Dataset, model: PropensityModel | None = None, k=15, m=None, alpha=0.0,
              fallback="paper-literal", propensity=None) -> list[IndividualScore]:
    """Score every record of a normalized dataset, ordered by id.

    Propensities come from ``model`` unless ``propensity`` (one per record)
    is given.
    """
    check_dataset(dataset, normalized=True, nonempty=True)
    k = check_positive_int(k, "k")
    m = check_max_distance(m)
    alpha = check_alpha(alpha)
    check_fallback(fallback)
    if propensity is None:
        if model is None:
            raise ValueError("score_all needs a fitted model or precomputed propensities")
        propensity = model.propensity(dataset.table)
    e = np.asarray(propensity, dtype=float)
    if e.shape != (len(dataset),):
        raise ValueError("propensity must hold one value per record")
    w = weight_of(e)
    rates = base_rates(dataset)
    prot, pos = dataset.protected, dataset.positive
    scores = []
    for ks in iter_ksets(dataset, k, m):
        ids = ks.ids
        table = contingency(ids, dataset)
        p1 = p1_of(table, rates)
        rd = p1 - p2_of(table, rates, fallback)
        unprot = ids[~prot[ids]]
        p2c = weighted_negative_rate(~pos[unprot], w[unprot], rates, fallback).p2c
        rdc = p1 - p2c
        i = ks.center
        group = PROTECTED if prot[i] else UNPROTECTED
        s = IndividualScore(i, group, POSITIVE if pos[i] else NEGATIVE, float(e[i]),
                            float(rd), float(rdc), float(disadvantage_of(group, rdc)))
        scores.append(replace(s, flag=classify(s, alpha)))
    return scores


def scores_frame(scores) -> pd.DataFrame:
    return pd.DataFrame([s.__dict__ for s in scores], columns=SCORE_COLUMNS)


def scores_from_frame(frame: pd.DataFrame) -> list[IndividualScore]:
    return [IndividualScore(int(r.id), r.group, r.decision, float(r.propensity), float(r.rd),
                            float(r.rd_causal), float(r.disadvantage), r.flag)
            for r in frame.itertuples(index=False)]


class CausalSituationTester(TransformerMixin, BaseEstimator):
    """Estimator bundling covariate selection, propensity fit and kset scoring.

    ``fit`` learns the normalization, the covariate selection and the
    propensity model on a :class:`Dataset`; ``transform`` scores every record
    of a dataset against its own neighbors and returns a score frame.
    """

    def __init__(self, k=15, max_distance=None, alpha=0.0, fallback="paper-literal",
                 proxy_threshold=0.95, exclude=(), include=(), l2=1e-4, max_iter=1000,
                 tol=1e-6, clip_epsilon=0.01, binarize_numeric=False):
        self.k = k
        self.max_distance = max_distance
        self.alpha = alpha
        self.fallback = fallback
        self.proxy_threshold = proxy_threshold
        self.exclude = exclude
        self.include = include
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol
        self.clip_epsilon = clip_epsilon
        self.binarize_numeric = binarize_numeric

    def _normalized(self, X):
        check_dataset(X, nonempty=True)
        return X if X.normalized else self.normalizer_.transform(X)

    def fit(self, X, y=None):
        check_dataset(X, nonempty=True)
        self.normalizer_ = MinMaxNormalizer().fit(X)
        data = self._normalized(X)
        self.selection_ = select_covariates(data, self.proxy_threshold,
                                            exclude=tuple(self.exclude),
                                            include=tuple(self.include))
        self.propensity_model_ = PropensityModel(
            l2=self.l2, max_iter=self.max_iter, tol=self.tol,
            clip_epsilon=self.clip_epsilon, binarize_numeric=self.binarize_numeric,
        ).fit(data.table[self.selection_.selected], data.protected)
        return self

    def score(self, X, y=None):
        """List of :class:`IndividualScore` for ``X``."""
        check_is_fitted(self, "propensity_model_")
        data = self._normalized(X)
        return score_all(data, self.propensity_model_, self.k, self.max_distance,
                         self.alpha, self.fallback)

    def transform(self, X):
        return scores_frame(self.score(X))


# -- rules --------------------------------------------------------------------

@dataclass(frozen=True)
class Condition:
    """``attribute < value``, ``attribute >= value`` or ``attribute in value``."""

    attribute: str
    op: str
    value: object

    def evaluate(self, frame: pd.DataFrame) -> np.ndarray:
        col = frame[self.attribute]
        if self.op == "in":
            return col.astype(str).isin(self.value).to_numpy()
        x = col.to_numpy(dtype=float)
        return x < self.value if self.op == "<" else x >= self.value

    def to_dict(self):
        value = sorted(self.value) if self.op == "in" else self.value
        return {"attribute": self.attribute, "op": self.op, "value": value}

    def __str__(self):
        if self.op == "in":
            return f"{self.attribute} in {{{', '.join(sorted(self.value))}}}"
        return f"{self.attribute} {self.op} {self.value:g}"


@dataclass
class Rule:
    conditions: tuple
    predicted_rdc: float
    support: dict = field(default_factory=dict)
    coverage_share: dict = field(default_factory=dict)
    train_count: int = 0
    leaf_id: int | None = None

    def matches(self, frame: pd.DataFrame) -> np.ndarray:
        mask = np.ones(len(frame), dtype=bool)
        for c in self.conditions:
            mask &= c.evaluate(frame)
        return mask

    def to_dict(self):
        return {"conditions": [c.to_dict() for c in self.conditions],
                "text": str(self), "predicted_rdc": self.predicted_rdc,
                "train_count": self.train_count, "leaf_id": self.leaf_id,
                "support": dict(self.support), "coverage_share": dict(self.coverage_share)}

    @classmethod
    def from_dict(cls, doc):
        conds = []
        for c in doc["conditions"]:
            value = frozenset(map(str, c["value"])) if c["op"] == "in" else float(c["value"])
            conds.append(Condition(c["attribute"], c["op"], value))
        return cls(tuple(conds), float(doc.get("predicted_rdc", float("nan"))),
                   dict(doc.get("support", {})), dict(doc.get("coverage_share", {})),
                   int(doc.get("train_count", 0)), doc.get("leaf_id"))

    def __str__(self):
        if not self.conditions:
            return "(all)"
        return " AND ".join(str(c) for c in self.conditions)


def path_conditions(path, levels) -> tuple:
    """Merge the atoms along one root-to-leaf path (one or two atoms per attribute)."""
    merged: dict = {}
    order: list = []
    for split, went_left in path:
        a = split.attribute
        if split.kind == "categorical":
            allowed = {split.value} if went_left else set(levels[a]) - {split.value}
            key = (a, "in")
            merged[key] = merged[key] & allowed if key in merged else allowed
        else:
            key = (a, "<") if went_left else (a, ">=")
            if key in merged:
                merged[key] = min(merged[key], split.value) if went_left \
                    else max(merged[key], split.value)
            else:
                merged[key] = split.value
        if key not in order:
            order.append(key)
    return tuple(
        Condition(a, op, frozenset(merged[(a, op)]) if op == "in" else merged[(a, op)])
        for a, op in order
    )


def tree_frame(dataset: Dataset) -> pd.DataFrame:
    """Covariates in original units; categoricals keep the full level set."""
    frame = dataset.denormalized_covariates()
    for name in dataset.categorical_covariates:
        frame[name] = pd.Categorical(frame[name].astype(str),
                                     categories=sorted(frame[name].astype(str).unique()))
    return frame


def extract_rules(tree, full_dataset: Dataset, frame: pd.DataFrame | None = None) -> list[Rule]:
    """One rule per leaf with group support over ``full_dataset``.

    ``frame`` holds the attribute values the tree was trained on, aligned
    with ``full_dataset`` rows (default: :func:`tree_frame`). Sorted by
    predicted causal risk difference, highest first.
    """
    check_is_fitted(tree, "tree_")
    if frame is None:
        frame = tree_frame(full_dataset)
    prot = full_dataset.protected
    rules = []
    for leaf, path in tree.paths():
        rule = Rule(path_conditions(path, tree.levels_), leaf.prediction,
                    train_count=leaf.count, leaf_id=leaf.id)
        mask = rule.matches(frame)
        n_p = int(np.sum(mask & prot))
        n_u = int(np.sum(mask & ~prot))
        rule.support = {PROTECTED: n_p, UNPROTECTED: n_u}
        total = n_p + n_u
        rule.coverage_share = ({PROTECTED: n_p / total, UNPROTECTED: n_u / total}
                               if total else {PROTECTED: None, UNPROTECTED: None})
        rules.append(rule)
    rules.sort(key=lambda r: (-r.predicted_rdc, r.leaf_id))
    return rules


def compare_rule_across_groups(rule: Rule, scores, dataset: Dataset,
                               frame: pd.DataFrame | None = None) -> dict:
    """Mean ``rd_causal`` of matching records per group (``None`` when no match)."""
    if frame is None:
        frame = tree_frame(dataset)
    if isinstance(scores, pd.DataFrame):
        rdc = scores["rd_causal"].to_numpy(dtype=float)
    else:
        rdc = np.array([s.rd_causal for s in scores], dtype=float)
    if len(rdc) != len(dataset):
        raise ValueError("scores must cover every record of the dataset")
    mask = rule.matches(frame)
    out = {}
    for g, gmask in ((PROTECTED, dataset.protected), (UNPROTECTED, ~dataset.protected)):
        sel = rdc[mask & gmask]
        out[g] = {"count": int(sel.size),
                  "mean_rd_causal": math.fsum(sel) / sel.size if sel.size else None}
    return out

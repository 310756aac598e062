"""Contingency tables over ksets, risk difference and its causal version.

Risk difference compares the negative-decision rate of protected neighbors
(``p1``) with that of unprotected neighbors (``p2``). The causal variant
replaces ``p2`` by the propensity-weighted rate ``p2c``, which reweights
unprotected neighbors towards the protected covariate distribution.

Undefined proportions fall back to dataset-wide base rates:
``p1 -> p_neg`` when there are no protected neighbors, and ``p2 -> p_pos``
when there are no unprotected ones (``fallback="paper-literal"``, the
default) or ``p2 -> p_neg`` (``fallback="expected-negative"``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_fallback
from .dataset import BaseRates, Dataset
from .propensity import weight_of


@dataclass(frozen=True)
class ContingencyTable:
    a: int  # protected, negative
    b: int  # protected, positive
    c: int  # unprotected, negative
    d: int  # unprotected, positive

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("contingency counts must be non-negative")

    @property
    def n1(self):
        return self.a + self.b

    @property
    def n2(self):
        return self.c + self.d

    @property
    def m1(self):
        return self.a + self.c

    @property
    def m2(self):
        return self.b + self.d

    @property
    def n(self):
        return self.n1 + self.n2


@dataclass(frozen=True)
class WeightedGroupRate:
    weighted_negative: float
    weighted_total: float
    p2c: float


def _member_ids(kset):
    return kset.ids if hasattr(kset, "ids") else np.asarray(kset, dtype=np.int64)


def contingency(kset, dataset: Dataset) -> ContingencyTable:
    ids = _member_ids(kset)
    prot = dataset.protected[ids]
    pos = dataset.positive[ids]
    return ContingencyTable(
        a=int(np.sum(prot & ~pos)), b=int(np.sum(prot & pos)),
        c=int(np.sum(~prot & ~pos)), d=int(np.sum(~prot & pos)),
    )


def p1_of(table: ContingencyTable, rates: BaseRates) -> float:
    return table.a / table.n1 if table.n1 else rates.p_neg


def _p2_fallback(rates: BaseRates, fallback: str) -> float:
    return rates.p_pos if fallback == "paper-literal" else rates.p_neg


def p2_of(table: ContingencyTable, rates: BaseRates, fallback="paper-literal") -> float:
    check_fallback(fallback)
    return table.c / table.n2 if table.n2 else _p2_fallback(rates, fallback)


def risk_difference(table: ContingencyTable, rates: BaseRates, fallback="paper-literal") -> float:
    return p1_of(table, rates) - p2_of(table, rates, fallback)


def weighted_negative_rate(negative, weights, rates: BaseRates,
                           fallback="paper-literal") -> WeightedGroupRate:
    """``sum(w over negatives) / sum(w)`` for one set of unprotected neighbors."""
    check_fallback(fallback)
    negative = np.asarray(negative, dtype=bool)
    weights = np.asarray(weights, dtype=float)
    wn = float(weights[negative].sum())
    wt = float(weights.sum())
    p2c = wn / wt if wt > 0 else _p2_fallback(rates, fallback)
    return WeightedGroupRate(wn, wt, p2c)


def _unprotected_weights(ids, dataset, model=None, propensity=None):
    if propensity is None:
        if model is None:
            raise ValueError("need a fitted propensity model or precomputed propensities")
        e = model.propensity(dataset.table.iloc[ids])
    else:
        e = np.asarray(propensity, dtype=float)
        if e.shape == (len(dataset),):
            e = e[ids]
    return weight_of(e) if len(ids) else np.zeros(0)


def causal_negative_rate(kset, dataset: Dataset, model=None, rates: BaseRates | None = None,
                         fallback="paper-literal", propensity=None) -> WeightedGroupRate:
    """Weighted negative rate over the unprotected members of ``kset``.

    Weights come from ``model`` or from ``propensity``, an array aligned
    either with the whole dataset or with the unprotected members.
    """
    ids = _member_ids(kset)
    unprot = ids[~dataset.protected[ids]]
    if propensity is not None and np.shape(propensity) != (len(dataset),):
        if np.shape(propensity) != (len(unprot),):
            raise ValueError("propensity must align with the dataset or the unprotected members")
    w = _unprotected_weights(unprot, dataset, model, propensity)
    if rates is None:
        from .dataset import base_rates
        rates = base_rates(dataset)
    return weighted_negative_rate(~dataset.positive[unprot], w, rates, fallback)


def causal_risk_difference(kset, dataset: Dataset, model=None, rates: BaseRates | None = None,
                           fallback="paper-literal", propensity=None) -> float:
    if rates is None:
        from .dataset import base_rates
        rates = base_rates(dataset)
    table = contingency(kset, dataset)
    rate = causal_negative_rate(kset, dataset, model, rates, fallback, propensity)
    return p1_of(table, rates) - rate.p2c

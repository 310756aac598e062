import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalrd.dataset import BaseRates, base_rates
from causalrd.measures import (ContingencyTable, causal_negative_rate, causal_risk_difference,
                               contingency, p1_of, p2_of, risk_difference,
                               weighted_negative_rate)
from causalrd.neighborhood import iter_ksets
from causalrd.propensity import weight_of

from conftest import random_dataset, unit_dataset
from oracles import direct_p2c

RATES = BaseRates(p_neg=0.7, p_pos=0.3)


def example_kset(e_pos=0.5, e_neg=0.5):
    """15 records: 7 protected (4 negative), 8 unprotected (3 negative)."""
    prot = [True] * 7 + [False] * 8
    pos = [False] * 4 + [True] * 3 + [False] * 3 + [True] * 5
    data = unit_dataset(pd.DataFrame({"x": np.linspace(0, 1, 15)}), prot, pos)
    e = np.where(np.array(prot), 0.5, np.where(np.array(pos), e_pos, e_neg))
    return data, np.arange(15), e


def test_contingency_counts():
    data, ids, _ = example_kset()
    t = contingency(ids, data)
    assert (t.a, t.b, t.c, t.d) == (4, 3, 3, 5)
    assert (t.n1, t.n2, t.m1, t.m2, t.n) == (7, 8, 7, 8, 15)


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        ContingencyTable(-1, 0, 0, 0)


def test_worked_example_unweighted():
    data, ids, e = example_kset()
    t = contingency(ids, data)
    assert risk_difference(t, RATES) == pytest.approx(4 / 7 - 3 / 8, abs=1e-15)
    rdc = causal_risk_difference(ids, data, rates=RATES, propensity=e)
    assert rdc == pytest.approx(4 / 7 - 3 / 8, abs=1e-15)


def test_worked_example_weighted():
    data, ids, e = example_kset(e_pos=0.8)
    rdc = causal_risk_difference(ids, data, rates=RATES, propensity=e)
    assert rdc == pytest.approx(4 / 7 - 3 / 23, abs=1e-12)


def test_clip_floor_value():
    # positive unprotected at e = 0.01 carry weight 1/99 each
    data, ids, e = example_kset(e_pos=0.01)
    rdc = causal_risk_difference(ids, data, rates=RATES, propensity=e)
    assert rdc == pytest.approx(4 / 7 - 3 / (3 + 5 / 99), abs=1e-12)


def test_vanishing_positive_weight_limit():
    data, ids, e = example_kset(e_pos=1e-9)
    rdc = causal_risk_difference(ids, data, rates=RATES, propensity=e)
    assert rdc == pytest.approx(4 / 7 - 1.0, abs=1e-6)


def test_propensity_aligned_with_unprotected_members():
    data, ids, e = example_kset(e_pos=0.8)
    rate = causal_negative_rate(ids, data, rates=RATES, propensity=e[7:])
    assert rate.p2c == pytest.approx(3 / 23)
    assert rate.weighted_total == pytest.approx(23.0)
    with pytest.raises(ValueError):
        causal_negative_rate(ids, data, rates=RATES, propensity=e[:3])


def test_needs_model_or_propensity():
    data, ids, _ = example_kset()
    with pytest.raises(ValueError):
        causal_risk_difference(ids, data, rates=RATES)


@pytest.mark.parametrize("fallback,expected_p2", [("paper-literal", 0.3),
                                                  ("expected-negative", 0.7)])
def test_fallbacks(fallback, expected_p2):
    no_protected = ContingencyTable(0, 0, 2, 1)
    no_unprotected = ContingencyTable(1, 3, 0, 0)
    assert p1_of(no_protected, RATES) == 0.7
    assert p2_of(no_unprotected, RATES, fallback) == expected_p2
    assert risk_difference(no_unprotected, RATES, fallback) == 0.25 - expected_p2
    empty = weighted_negative_rate([], [], RATES, fallback)
    assert empty.p2c == expected_p2


def test_default_fallback_is_paper_literal():
    assert p2_of(ContingencyTable(1, 0, 0, 0), RATES) == RATES.p_pos


def test_unknown_fallback():
    with pytest.raises(ValueError):
        p2_of(ContingencyTable(1, 0, 1, 0), RATES, "zero")


def test_empty_kset_uses_both_fallbacks():
    t = ContingencyTable(0, 0, 0, 0)
    assert risk_difference(t, RATES) == 0.7 - 0.3


def test_base_rates():
    data, _, _ = example_kset()
    r = base_rates(data)
    assert r.p_neg == 7 / 15 and r.p_pos == 8 / 15


@pytest.mark.parametrize("seed", range(3))
def test_direct_summation_oracle(seed):
    data = random_dataset(80, seed)
    rng = np.random.default_rng(seed)
    e = rng.uniform(0.02, 0.98, len(data))
    rates = base_rates(data)
    for ks in iter_ksets(data, 9):
        ids = ks.ids
        unprot = [i for i in ids if not data.protected[i]]
        prot = [i for i in ids if data.protected[i]]
        if not unprot or not prot:
            continue
        p1 = sum(not data.positive[i] for i in prot) / len(prot)
        p2c = direct_p2c([not data.positive[i] for i in unprot],
                         [e[i] / (1 - e[i]) for i in unprot])
        got = causal_risk_difference(ids, data, rates=rates, propensity=e)
        assert got == pytest.approx(p1 - p2c, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.floats(0.01, 0.99)), min_size=1, max_size=30),
       st.sampled_from([1e-6, 1e-3, 1.0, 1e3, 1e6]))
def test_weight_scale_invariance(members, kappa):
    neg = [m[0] for m in members]
    w = weight_of(np.array([m[1] for m in members]))
    base = weighted_negative_rate(neg, w, RATES).p2c
    scaled = weighted_negative_rate(neg, kappa * w, RATES).p2c
    assert abs(base - scaled) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.floats(0.01, 0.99)), min_size=1, max_size=30))
def test_p2c_is_a_proportion(members):
    neg = [m[0] for m in members]
    w = weight_of(np.array([m[1] for m in members]))
    p = weighted_negative_rate(neg, w, RATES).p2c
    assert 0.0 <= p <= 1.0
    if all(neg):
        assert p == 1.0
    if not any(neg):
        assert p == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=30), st.floats(0.01, 0.99))
def test_equal_weights_reduce_to_unweighted(neg, e):
    w = np.full(len(neg), weight_of(e))
    assert weighted_negative_rate(neg, w, RATES).p2c == pytest.approx(sum(neg) / len(neg))

"""Controlled decision flips used to study confounders.

Records are visited in id order; every positive record matching the rule
consumes one draw from ``numpy.random.Generator(PCG64(seed))`` and is flipped
to negative when the draw is below ``fraction``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ._validation import check_fraction
from .dataset import Dataset
from .discovery import Condition, Rule
from .exceptions import SchemaError

_COND_RE = re.compile(r"^\s*([^<>=!]+?)\s*(<=|>=|<|>|=|\bin\b)\s*(.+?)\s*$")


def parse_condition(text) -> Condition:
    """Parse ``attr=value``, ``attr in v1|v2``, ``attr<t`` or ``attr>=t``."""
    if isinstance(text, Condition):
        return text
    if isinstance(text, dict):
        value = text["value"]
        if text["op"] == "in":
            value = frozenset(map(str, value if isinstance(value, (list, tuple, set))
                                  else [value]))
        else:
            value = float(value)
        return Condition(text["attribute"], text["op"], value)
    m = _COND_RE.match(text)
    if not m:
        raise SchemaError(f"cannot parse condition {text!r}")
    attr, op, value = m.groups()
    if op in ("=", "in"):
        return Condition(attr, "in", frozenset(v.strip() for v in value.split("|")))
    if op in ("<", ">="):
        return Condition(attr, op, float(value))
    raise SchemaError(f"operator {op!r} not supported; use '<' or '>='")


def parse_rule(spec) -> Rule:
    if isinstance(spec, Rule):
        return spec
    if isinstance(spec, (str, dict, Condition)):
        spec = [spec]
    return Rule(tuple(parse_condition(c) for c in spec), float("nan"))


@dataclass(frozen=True)
class TamperSpec:
    rule: Rule
    fraction: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rule", parse_rule(self.rule))
        object.__setattr__(self, "fraction", check_fraction(self.fraction))
        object.__setattr__(self, "seed", int(self.seed))


def tamper(dataset: Dataset, spec: TamperSpec):
    """Return ``(tampered_dataset, flipped_ids)``.

    Only positive records matching the rule can change, and only their
    decision does.
    """
    known = set(dataset.table.columns)
    for c in spec.rule.conditions:
        if c.attribute not in known:
            raise SchemaError(f"tamper rule references unknown attribute {c.attribute!r}")
    frame = dataset.table.copy()
    cov = dataset.denormalized_covariates()
    for name in cov.columns:
        frame[name] = cov[name]
    match = spec.rule.matches(frame)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    positive = dataset.positive.copy()
    flipped = []
    for i in np.flatnonzero(match & dataset.positive):
        if rng.random() < spec.fraction:
            positive[i] = False
            flipped.append(int(i))
    return dataset.with_positive(positive), flipped

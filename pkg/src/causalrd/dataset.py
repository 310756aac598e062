"""Decision datasets: schema roles, loading, binarization, normalization.

A :class:`Dataset` is an immutable relation of tuples whose attributes carry
one of four roles: ``covariate`` (used for distances, propensity and trees),
``group`` (the social group; one designated value is the protected group),
``decision`` (binary outcome, mapped to negative/positive) and ``ignore``
(carried along and echoed back, never analysed).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dataset
from .exceptions import DataFormatError, SchemaError

NUMERIC = "numeric"
CATEGORICAL = "categorical"
KINDS = (NUMERIC, CATEGORICAL)

COVARIATE = "covariate"
GROUP = "group"
DECISION = "decision"
IGNORE = "ignore"
ROLES = (COVARIATE, GROUP, DECISION, IGNORE)

PROTECTED = "protected"
UNPROTECTED = "unprotected"
NEGATIVE = "-"
POSITIVE = "+"

MISSING_TOKENS = ("", "?")

_OPS = {
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
}


@dataclass(frozen=True)
class AttributeSchema:
    name: str
    kind: str = NUMERIC
    role: str = COVARIATE
    levels: tuple | None = None

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise SchemaError(f"attribute name must be a non-empty string: {self.name!r}")
        if self.kind not in KINDS:
            raise SchemaError(f"attribute {self.name!r}: kind must be one of {KINDS}")
        if self.role not in ROLES:
            raise SchemaError(f"attribute {self.name!r}: role must be one of {ROLES}")
        if self.levels is not None:
            if self.kind != CATEGORICAL:
                raise SchemaError(f"attribute {self.name!r}: levels only apply to categorical attributes")
            object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))

    def to_dict(self):
        out = {"name": self.name, "kind": self.kind, "role": self.role}
        if self.levels is not None:
            out["levels"] = list(self.levels)
        return out


@dataclass(frozen=True)
class PositiveCondition:
    """Which raw decision values count as the positive decision.

    ``op`` is one of ``<``, ``<=``, ``>``, ``>=`` (numeric threshold against
    ``value``) or ``in`` (``value`` is a set of categorical tokens).
    """

    op: str
    value: Any

    def __post_init__(self):
        if self.op == "in":
            vals = self.value
            if isinstance(vals, (str, bytes)) or not isinstance(vals, Iterable):
                vals = [vals]
            object.__setattr__(self, "value", frozenset(str(v) for v in vals))
        elif self.op in _OPS:
            object.__setattr__(self, "value", float(self.value))
        else:
            raise SchemaError(f"unknown decision condition operator {self.op!r}")

    @property
    def is_threshold(self):
        return self.op != "in"

    @classmethod
    def parse(cls, spec):
        """Build a condition from config.

        Accepts another condition, ``{"op": "<", "value": 20}``,
        ``{"values": [...]}``, a list of tokens, a string such as ``"<20"``
        or a single token.
        """
        if isinstance(spec, cls):
            return spec
        if isinstance(spec, Mapping):
            if "values" in spec:
                return cls("in", spec["values"])
            if "op" in spec:
                return cls(spec["op"], spec["value"])
            if "value" in spec:
                return cls("in", [spec["value"]])
            raise SchemaError(f"cannot parse decision condition {dict(spec)!r}")
        if isinstance(spec, (list, tuple, set, frozenset)):
            return cls("in", spec)
        if isinstance(spec, str):
            for op in ("<=", ">=", "<", ">"):
                if spec.startswith(op):
                    rest = spec[len(op):].strip()
                    try:
                        return cls(op, float(rest))
                    except ValueError:
                        break
        return cls("in", [spec])

    def evaluate(self, values):
        values = np.asarray(values)
        if self.op == "in":
            return np.array([str(v) in self.value for v in values], dtype=bool)
        return _OPS[self.op](values.astype(float), self.value)

    def to_dict(self):
        if self.op == "in":
            return {"values": sorted(self.value)}
        return {"op": self.op, "value": self.value}


@dataclass(frozen=True)
class SchemaConfig:
    """Roles for every column plus the group/decision mappings."""

    attributes: tuple
    protected: str
    positive: PositiveCondition
    delimiter: str = ","
    missing_tokens: tuple = MISSING_TOKENS

    def __post_init__(self):
        attrs = tuple(a if isinstance(a, AttributeSchema) else AttributeSchema(**a)
                      for a in self.attributes)
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "protected", str(self.protected))
        object.__setattr__(self, "positive", PositiveCondition.parse(self.positive))
        object.__setattr__(self, "missing_tokens", tuple(self.missing_tokens))
        validate_schema(attrs)
        group = self.group_attribute
        if group.levels is not None and self.protected not in group.levels:
            raise SchemaError(f"protected value {self.protected!r} is not a level of {group.name!r}")
        dec = self.decision_attribute
        if self.positive.is_threshold and dec.kind != NUMERIC:
            raise SchemaError(f"threshold condition on categorical decision {dec.name!r}")
        if not self.positive.is_threshold and dec.kind != CATEGORICAL:
            raise SchemaError(f"value-set condition on numeric decision {dec.name!r}")

    @property
    def names(self):
        return [a.name for a in self.attributes]

    @property
    def group_attribute(self):
        return next(a for a in self.attributes if a.role == GROUP)

    @property
    def decision_attribute(self):
        return next(a for a in self.attributes if a.role == DECISION)

    @classmethod
    def from_dict(cls, cfg):
        cfg = dict(cfg)
        try:
            attributes = cfg["attributes"]
            group = cfg["group"]
            decision = cfg["decision"]
        except KeyError as exc:
            raise SchemaError(f"schema config is missing {exc.args[0]!r}") from None
        attrs = []
        for a in attributes:
            if isinstance(a, str):
                a = {"name": a}
            attrs.append(dict(a))
        by_name = {a["name"]: a for a in attrs}
        for key, role in (("group", GROUP), ("decision", DECISION)):
            spec = cfg[key]
            name = spec.get("attribute")
            if name not in by_name:
                raise SchemaError(f"{key} attribute {name!r} is not declared in attributes")
            by_name[name]["role"] = role
        by_name[group["attribute"]].setdefault("kind", CATEGORICAL)
        if "positive" not in decision:
            raise SchemaError("decision config needs a 'positive' condition")
        positive = PositiveCondition.parse(decision["positive"])
        by_name[decision["attribute"]].setdefault(
            "kind", NUMERIC if positive.is_threshold else CATEGORICAL)
        if "protected" not in group:
            raise SchemaError("group config needs a 'protected' value")
        return cls(
            attributes=tuple(AttributeSchema(**a) for a in attrs),
            protected=group["protected"],
            positive=positive,
            delimiter=cfg.get("delimiter", ","),
            missing_tokens=tuple(cfg.get("missing_tokens", MISSING_TOKENS)),
        )

    def to_dict(self):
        return {
            "attributes": [a.to_dict() for a in self.attributes],
            "group": {"attribute": self.group_attribute.name, "protected": self.protected},
            "decision": {"attribute": self.decision_attribute.name,
                         "positive": self.positive.to_dict()},
            "delimiter": self.delimiter,
            "missing_tokens": list(self.missing_tokens),
        }


def load_schema_config(path_or_mapping):
    """Read a schema config from a YAML/JSON file or an already-parsed mapping."""
    if isinstance(path_or_mapping, SchemaConfig):
        return path_or_mapping
    if isinstance(path_or_mapping, Mapping):
        return SchemaConfig.from_dict(path_or_mapping)
    import yaml

    with open(path_or_mapping, encoding="utf-8") as fh:
        return SchemaConfig.from_dict(yaml.safe_load(fh))


def validate_schema(attributes: Sequence[AttributeSchema]):
    names = [a.name for a in attributes]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise SchemaError(f"duplicate attribute names: {dupes}")
    for role in (GROUP, DECISION):
        count = sum(a.role == role for a in attributes)
        if count != 1:
            raise SchemaError(f"exactly one attribute must have role={role}, found {count}")
    group = next(a for a in attributes if a.role == GROUP)
    if group.kind != CATEGORICAL:
        raise SchemaError(f"group attribute {group.name!r} must be categorical")


@dataclass(frozen=True)
class Record:
    id: int
    values: Mapping[str, Any]
    group: str
    decision: str


@dataclass(frozen=True)
class BaseRates:
    p_neg: float
    p_pos: float


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable decision relation.

    ``table`` holds every configured column (covariate numerics as float64,
    categoricals as strings); ``protected`` and ``positive`` are the mapped
    boolean group and decision vectors. Record ids are the row positions.
    """

    config: SchemaConfig
    table: pd.DataFrame
    protected: np.ndarray
    positive: np.ndarray
    normalization: Mapping[str, tuple] | None = None

    def __post_init__(self):
        n = len(self.table)
        prot = np.asarray(self.protected, dtype=bool)
        pos = np.asarray(self.positive, dtype=bool)
        if prot.shape != (n,) or pos.shape != (n,):
            raise ValueError("group/decision vectors must match the table length")
        prot.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "protected", prot)
        object.__setattr__(self, "positive", pos)
        table = self.table.reset_index(drop=True)
        object.__setattr__(self, "table", table)

    def __len__(self):
        return len(self.table)

    def __iter__(self):
        return (self.record(i) for i in range(len(self)))

    @property
    def schema(self):
        return self.config.attributes

    @property
    def normalized(self):
        return self.normalization is not None

    @property
    def ids(self):
        return np.arange(len(self))

    @cached_property
    def covariate_schema(self):
        return tuple(a for a in self.schema if a.role == COVARIATE)

    @property
    def covariate_names(self):
        return [a.name for a in self.covariate_schema]

    @property
    def numeric_covariates(self):
        return [a.name for a in self.covariate_schema if a.kind == NUMERIC]

    @property
    def categorical_covariates(self):
        return [a.name for a in self.covariate_schema if a.kind == CATEGORICAL]

    @property
    def covariates(self):
        """Covariate columns only, in schema order (a copy)."""
        return self.table[self.covariate_names].copy()

    def kind_of(self, name):
        for a in self.schema:
            if a.name == name:
                return a.kind
        raise KeyError(name)

    @cached_property
    def distance_matrix_inputs(self):
        """Per-covariate columns ready for the mixed distance.

        Returns a list of ``(kind, column)`` with numeric columns as float64
        and categorical columns as integer codes over the full dataset.
        """
        cols = []
        for a in self.covariate_schema:
            s = self.table[a.name]
            if a.kind == NUMERIC:
                col = s.to_numpy(dtype=float)
            else:
                col = pd.Categorical(s.astype(str)).codes.astype(np.int64)
            col.setflags(write=False)
            cols.append((a.kind, col))
        return cols

    def group_label(self, i):
        return PROTECTED if self.protected[i] else UNPROTECTED

    def decision_label(self, i):
        return POSITIVE if self.positive[i] else NEGATIVE

    def record(self, i):
        i = int(i)
        if not 0 <= i < len(self):
            raise IndexError(f"record id {i} out of range for dataset of size {len(self)}")
        row = self.table.iloc[i]
        values = {name: _py(row[name]) for name in self.table.columns}
        return Record(i, values, self.group_label(i), self.decision_label(i))

    def denormalized_covariates(self):
        """Covariates mapped back to their original units."""
        cov = self.covariates
        if self.normalization:
            for name, (lo, hi) in self.normalization.items():
                if hi > lo:
                    cov[name] = cov[name] * (hi - lo) + lo
                else:
                    cov[name] = lo
        return cov

    def with_positive(self, positive):
        """Copy with a replaced decision vector (raw decision column updated to match)."""
        positive = np.asarray(positive, dtype=bool)
        table = self.table.copy()
        dec = self.config.decision_attribute
        cond = self.config.positive
        if not cond.is_threshold:
            pos_token = sorted(cond.value)[0]
            old = table[dec.name].astype(str).to_numpy()
            neg_tokens = old[~self.positive]
            neg_token = neg_tokens[0] if len(neg_tokens) else _negative_level(dec, cond)
            changed = positive != self.positive
            new = old.copy()
            new[changed & positive] = pos_token
            new[changed & ~positive] = neg_token
            table[dec.name] = new
        else:
            # keep raw values unless they contradict the new decision
            raw = table[dec.name].to_numpy(dtype=float).copy()
            changed = positive != self.positive
            if changed.any():
                raw[changed] = _threshold_representative(cond, positive[changed])
            table[dec.name] = raw
        return replace(self, table=table, positive=positive)


def _negative_level(attr, cond):
    if attr.levels:
        for lvl in attr.levels:
            if lvl not in cond.value:
                return lvl
    return "not(" + "|".join(sorted(cond.value)) + ")"


def _threshold_representative(cond, want_positive):
    t = cond.value
    below = np.nextafter(t, -np.inf)
    above = np.nextafter(t, np.inf)
    # value satisfying / violating the threshold condition
    sat = {"<": below, "<=": t, ">": above, ">=": t}[cond.op]
    vio = {"<": t, "<=": above, ">": t, ">=": below}[cond.op]
    return np.where(want_positive, sat, vio)


def _py(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def _parse_float(token, row, column):
    try:
        value = float(token)
    except ValueError:
        raise DataFormatError(f"non-numeric token {token!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise DataFormatError(f"non-finite value {token!r}", row=row, column=column)
    return value


def load_dataset(source, schema_config) -> Dataset:
    """Read a delimited table with a header row and validate it.

    ``source`` is a path or a text stream; ``schema_config`` a
    :class:`SchemaConfig`, a mapping or a YAML/JSON path. Rows are numbered
    from 1 for the header in error messages.
    """
    config = load_schema_config(schema_config)
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return _read(fh, config)
    return _read(source, config)


def _read(stream, config: SchemaConfig) -> Dataset:
    reader = csv.reader(stream, delimiter=config.delimiter, skipinitialspace=True)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataFormatError("empty input: no header row", row=1) from None
    seen = set()
    for j, h in enumerate(header):
        if not h:
            raise DataFormatError(f"blank header at position {j + 1}", row=1)
        if h in seen:
            raise DataFormatError("duplicate header", row=1, column=h)
        seen.add(h)
    missing = [n for n in config.names if n not in seen]
    if missing:
        raise DataFormatError(f"missing column(s) {missing}", row=1, column=missing[0])
    extra = [h for h in header if h not in config.names]
    if extra:
        raise DataFormatError(f"column(s) {extra} not declared in the schema", row=1, column=extra[0])
    pos = {h: j for j, h in enumerate(header)}
    columns = {a.name: [] for a in config.attributes}
    missing_tokens = set(config.missing_tokens)
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, found {len(row)}", row=lineno)
        for a in config.attributes:
            token = row[pos[a.name]].strip()
            if token in missing_tokens:
                raise DataFormatError(f"missing value {token!r}", row=lineno, column=a.name)
            if a.kind == NUMERIC:
                columns[a.name].append(_parse_float(token, lineno, a.name))
            else:
                if a.levels is not None and token not in a.levels:
                    raise DataFormatError(f"unknown level {token!r}", row=lineno, column=a.name)
                columns[a.name].append(token)
    table = pd.DataFrame({
        a.name: pd.Series(columns[a.name], dtype=float if a.kind == NUMERIC else object)
        for a in config.attributes
    })
    group = config.group_attribute
    protected = table[group.name].to_numpy() == config.protected
    dec = config.decision_attribute
    positive = config.positive.evaluate(table[dec.name].to_numpy())
    return Dataset(config, table, protected, positive)


def from_frame(frame: pd.DataFrame, schema_config) -> Dataset:
    """Build a Dataset from an in-memory frame (values are validated like a file)."""
    config = load_schema_config(schema_config)
    buf = io.StringIO()
    frame[config.names].to_csv(buf, index=False, sep=config.delimiter)
    buf.seek(0)
    return _read(buf, config)


def make_dataset(covariates: pd.DataFrame, protected, positive, *, normalized=False) -> Dataset:
    """Dataset from an in-memory covariate frame plus group/decision vectors.

    Numeric dtypes become numeric covariates, everything else categorical.
    The group column is written as ``protected``/``unprotected`` and the
    decision as ``+``/``-``. With ``normalized=True`` numeric covariates are
    min-max scaled.
    """
    covariates = covariates.reset_index(drop=True)
    protected = np.asarray(protected, dtype=bool)
    positive = np.asarray(positive, dtype=bool)
    for reserved in ("group", "decision"):
        if reserved in covariates.columns:
            raise SchemaError(f"covariate name {reserved!r} is reserved")
    attrs = []
    table = {}
    for name in covariates.columns:
        col = covariates[name]
        numeric = pd.api.types.is_numeric_dtype(col) and not pd.api.types.is_bool_dtype(col)
        attrs.append(AttributeSchema(str(name), NUMERIC if numeric else CATEGORICAL))
        table[str(name)] = col.astype(float) if numeric else col.astype(str).astype(object)
    attrs.append(AttributeSchema("group", CATEGORICAL, GROUP, (PROTECTED, UNPROTECTED)))
    attrs.append(AttributeSchema("decision", CATEGORICAL, DECISION, (NEGATIVE, POSITIVE)))
    table["group"] = np.where(protected, PROTECTED, UNPROTECTED).astype(object)
    table["decision"] = np.where(positive, POSITIVE, NEGATIVE).astype(object)
    config = SchemaConfig(tuple(attrs), PROTECTED, PositiveCondition("in", [POSITIVE]))
    data = Dataset(config, pd.DataFrame(table), protected, positive)
    return normalize_numeric(data) if normalized else data


def write_dataset(dataset: Dataset, dest):
    """Echo a dataset in the same delimited format it was loaded from."""
    check_dataset(dataset)
    kwargs = dict(index=False, sep=dataset.config.delimiter, lineterminator="\n")
    if isinstance(dest, (str, os.PathLike)):
        dataset.table.to_csv(dest, **kwargs)
    else:
        dest.write(dataset.table.to_csv(**kwargs))


def binarize_decision(dataset: Dataset, attribute: str, positive_condition) -> Dataset:
    """Make ``attribute`` the decision: positive where the condition holds.

    The attribute leaves the covariates; the previous decision attribute (if a
    different one) is demoted to ``ignore``.
    """
    check_dataset(dataset)
    cond = PositiveCondition.parse(positive_condition)
    attrs = list(dataset.schema)
    idx = next((i for i, a in enumerate(attrs) if a.name == attribute), None)
    if idx is None:
        raise SchemaError(f"unknown attribute {attribute!r}")
    target = attrs[idx]
    if target.role == GROUP:
        raise SchemaError("the group attribute cannot become the decision")
    if cond.is_threshold != (target.kind == NUMERIC):
        raise SchemaError(
            f"condition {cond.op!r} does not match {target.kind} attribute {attribute!r}")
    new_attrs = []
    for a in attrs:
        if a.name == attribute:
            new_attrs.append(replace(a, role=DECISION))
        elif a.role == DECISION:
            new_attrs.append(replace(a, role=IGNORE))
        else:
            new_attrs.append(a)
    config = replace(dataset.config, attributes=tuple(new_attrs), positive=cond)
    table = dataset.table.copy()
    if target.kind == NUMERIC and dataset.normalization and attribute in dataset.normalization:
        lo, hi = dataset.normalization[attribute]
        table[attribute] = table[attribute] * (hi - lo) + lo if hi > lo else lo
    positive = cond.evaluate(table[attribute].to_numpy())
    norm = None
    if dataset.normalization is not None:
        norm = {k: v for k, v in dataset.normalization.items() if k != attribute}
    return Dataset(config, table, dataset.protected, positive, norm)


def _minmax(table, names):
    state = {}
    for name in names:
        col = table[name].to_numpy(dtype=float)
        if len(col):
            state[name] = (float(col.min()), float(col.max()))
        else:
            state[name] = (0.0, 0.0)
    return state


def _apply_minmax(table, state):
    table = table.copy()
    for name, (lo, hi) in state.items():
        col = table[name].to_numpy(dtype=float)
        if hi > lo:
            table[name] = (col - lo) / (hi - lo)
        else:
            table[name] = np.zeros_like(col)
    return table


def normalize_numeric(dataset: Dataset) -> Dataset:
    """Min-max scale numeric covariates to [0, 1] using the observed range.

    Constant columns map to 0. The per-column ``(min, max)`` is kept on the
    result so new values can be scaled identically.
    """
    check_dataset(dataset)
    if dataset.normalized:
        raise ValueError("dataset is already normalized")
    state = _minmax(dataset.table, dataset.numeric_covariates)
    return replace(dataset, table=_apply_minmax(dataset.table, state), normalization=state)


class MinMaxNormalizer(TransformerMixin, BaseEstimator):
    """Estimator form of :func:`normalize_numeric`.

    Learns the observed range on one dataset and applies it to others
    (values outside the learned range fall outside [0, 1]).
    """

    def fit(self, X, y=None):
        check_dataset(X)
        self.ranges_ = _minmax(X.table, X.numeric_covariates)
        return self

    def transform(self, X):
        check_is_fitted(self, "ranges_")
        check_dataset(X)
        missing = [n for n in self.ranges_ if n not in X.table.columns]
        if missing:
            raise ValueError(f"dataset lacks fitted columns {missing}")
        return replace(X, table=_apply_minmax(X.table, self.ranges_),
                       normalization=dict(self.ranges_))


def partition_by_group(dataset: Dataset, g: str) -> list[Record]:
    if g not in (PROTECTED, UNPROTECTED):
        raise ValueError(f"group label must be {PROTECTED!r} or {UNPROTECTED!r}")
    mask = dataset.protected if g == PROTECTED else ~dataset.protected
    return [dataset.record(i) for i in np.flatnonzero(mask)]


def base_rates(dataset: Dataset) -> BaseRates:
    check_dataset(dataset, nonempty=True)
    n = len(dataset)
    n_pos = int(dataset.positive.sum())
    return BaseRates(p_neg=(n - n_pos) / n, p_pos=n_pos / n)


def dataset_digest(dataset: Dataset) -> str:
    import hashlib

    buf = io.StringIO()
    write_dataset(dataset, buf)
    payload = json.dumps(dataset.config.to_dict(), sort_keys=True) + "\n" + buf.getvalue()
    return hashlib.sha256(payload.encode()).hexdigest()

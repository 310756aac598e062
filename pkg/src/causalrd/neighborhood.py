"""Mixed Euclidean distance, neighbor ranking and ksets.

The distance is ``sqrt(sum (x_j - y_j)**2 + sum [u_j != v_j])`` over numeric
and categorical covariates respectively, accumulated in schema order. The
scalar and the vectorised paths add the same terms in the same order, so they
agree bit for bit; this is what makes the (distance, id) ordering exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import check_dataset, check_max_distance, check_positive_int
from .dataset import NUMERIC, Dataset, Record


@dataclass(frozen=True)
class RankedNeighbor:
    id: int
    distance: float
    rank: int


@dataclass(frozen=True)
class KSet:
    center: int
    k: int
    max_distance: Optional[float]
    members: tuple

    @property
    def ids(self):
        return np.array([m.id for m in self.members], dtype=np.int64)

    def __len__(self):
        return len(self.members)


def distance(schema, r: Record, s: Record) -> float:
    """Distance between two records of a normalized dataset.

    ``schema`` is the attribute list; only covariates contribute.
    """
    acc = 0.0
    for a in schema:
        if a.role != "covariate":
            continue
        if a.kind == NUMERIC:
            diff = float(r.values[a.name]) - float(s.values[a.name])
            acc += diff * diff
        elif r.values[a.name] != s.values[a.name]:
            acc += 1.0
    return math.sqrt(acc)


def record_distance(dataset: Dataset, i: int, j: int) -> float:
    check_dataset(dataset, normalized=True)
    return distance(dataset.schema, dataset.record(i), dataset.record(j))


def distances_from(dataset: Dataset, centers, targets=None) -> np.ndarray:
    """Distance block of shape ``(len(centers), len(targets))``."""
    check_dataset(dataset, normalized=True)
    centers = np.atleast_1d(np.asarray(centers, dtype=np.int64))
    acc = np.zeros((len(centers), len(dataset) if targets is None else len(targets)))
    for kind, col in dataset.distance_matrix_inputs:
        tcol = col if targets is None else col[targets]
        if kind == NUMERIC:
            diff = col[centers][:, None] - tcol[None, :]
            acc += diff * diff
        else:
            acc += (col[centers][:, None] != tcol[None, :])
    return np.sqrt(acc)


def _ordered(dist_row, center, limit=None):
    """Ids other than ``center`` sorted by (distance, id); first ``limit`` only."""
    d = dist_row.copy()
    d[center] = np.inf
    n_other = len(d) - 1
    if limit is None or limit >= n_other:
        order = np.lexsort((np.arange(len(d)), d))
        order = order[order != center][:n_other]
        return order, dist_row[order]
    # everything at or below the limit-th smallest distance, then exact sort
    kth = np.partition(d, limit - 1)[limit - 1]
    cand = np.flatnonzero(d <= kth)
    cand = cand[cand != center]
    order = cand[np.lexsort((cand, d[cand]))][:limit]
    return order, dist_row[order]


def rank_neighbors(dataset: Dataset, r) -> list[RankedNeighbor]:
    """Full ordering of every other record by (distance, id)."""
    check_dataset(dataset, normalized=True)
    center = _center_id(dataset, r)
    row = distances_from(dataset, [center])[0]
    order, dist = _ordered(row, center)
    return [RankedNeighbor(int(i), float(d), rank)
            for rank, (i, d) in enumerate(zip(order, dist), start=1)]


def kset(dataset: Dataset, r, k: int, m: Optional[float] = None) -> KSet:
    """Up to ``k`` nearest other records, optionally capped at distance ``m``."""
    check_dataset(dataset, normalized=True)
    k = check_positive_int(k, "k")
    m = check_max_distance(m)
    center = _center_id(dataset, r)
    row = distances_from(dataset, [center])[0]
    return _kset_from_row(row, center, k, m)


def _kset_from_row(row, center, k, m):
    order, dist = _ordered(row, center, k)
    members = []
    for rank, (i, d) in enumerate(zip(order, dist), start=1):
        if m is not None and d > m:
            break
        members.append(RankedNeighbor(int(i), float(d), rank))
    return KSet(int(center), k, m, tuple(members))


def iter_ksets(dataset: Dataset, k: int, m: Optional[float] = None, block_size: int = 256):
    """Yield the kset of every record in id order, computing distances blockwise."""
    check_dataset(dataset, normalized=True)
    k = check_positive_int(k, "k")
    m = check_max_distance(m)
    n = len(dataset)
    for start in range(0, n, block_size):
        centers = np.arange(start, min(n, start + block_size))
        block = distances_from(dataset, centers)
        for row, c in zip(block, centers):
            yield _kset_from_row(row, c, k, m)


def _center_id(dataset, r):
    if isinstance(r, Record):
        i = r.id
    else:
        i = int(r)
    if not 0 <= i < len(dataset):
        raise KeyError(f"record {i} is not in the dataset")
    return i

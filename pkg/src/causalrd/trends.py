"""Averages of scores over equal-width propensity bins."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from ._validation import check_positive_int
from .dataset import POSITIVE, PROTECTED, UNPROTECTED
from .discovery import DISCRIMINATED, FAVORED

POPULATIONS = ("all", PROTECTED, UNPROTECTED)
FLAGS = (None, DISCRIMINATED, FAVORED)

TREND_COLUMNS = ["bin_lo", "bin_hi", "population", "flag", "n", "mean_pos_prob", "mean_rd",
                 "mean_rdc", "mean_signed_rd", "mean_disadvantage", "low_count_flag"]


@dataclass(frozen=True)
class TrendRow:
    bin_lo: float
    bin_hi: float
    population: str
    flag: str
    n: int
    mean_pos_prob: float
    mean_rd: float
    mean_rdc: float
    mean_signed_rd: float
    mean_disadvantage: float
    low_count_flag: bool


def _mean(values):
    return math.fsum(values) / len(values) if len(values) else float("nan")


def bin_index(propensity, n_bins):
    """Bin of each propensity; the last bin is closed at 1."""
    e = np.asarray(propensity, dtype=float)
    return np.clip(np.floor(e * n_bins).astype(np.int64), 0, n_bins - 1)


def bin_trends(scores, population="all", flag=None, n_bins=10, min_count=5) -> list[TrendRow]:
    """Per-bin count, positive rate and mean (signed) risk differences.

    ``population`` picks all, protected or unprotected records; ``flag``
    optionally keeps only ``discriminated`` or ``favored`` ones. Signed
    columns use each record's own perspective (``-rd`` for unprotected).
    """
    n_bins = check_positive_int(n_bins, "n_bins")
    if population not in POPULATIONS:
        raise ValueError(f"population must be one of {POPULATIONS}")
    if flag not in FLAGS and flag != "all":
        raise ValueError(f"flag must be one of {FLAGS}")
    flag = None if flag == "all" else flag
    if isinstance(scores, pd.DataFrame):
        frame = scores
    else:
        frame = pd.DataFrame([s.__dict__ for s in scores])
    if frame.empty:
        raise ValueError("no scores to aggregate")
    keep = np.ones(len(frame), dtype=bool)
    if population != "all":
        keep &= (frame["group"] == population).to_numpy()
    if flag is not None:
        keep &= (frame["flag"] == flag).to_numpy()
    sub = frame[keep]
    sign = np.where(sub["group"].to_numpy() == PROTECTED, 1.0, -1.0)
    bins = bin_index(sub["propensity"], n_bins)
    pos = (sub["decision"].to_numpy() == POSITIVE).astype(float)
    rd = sub["rd"].to_numpy(dtype=float)
    rdc = sub["rd_causal"].to_numpy(dtype=float)
    rows = []
    for b in range(n_bins):
        m = bins == b
        n = int(m.sum())
        rows.append(TrendRow(
            bin_lo=b / n_bins, bin_hi=(b + 1) / n_bins, population=population,
            flag=flag or "all", n=n,
            mean_pos_prob=_mean(pos[m]), mean_rd=_mean(rd[m]), mean_rdc=_mean(rdc[m]),
            mean_signed_rd=_mean(sign[m] * rd[m]),
            mean_disadvantage=_mean(sign[m] * rdc[m]),
            low_count_flag=n < min_count,
        ))
    return rows


def trends_frame(rows) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in rows], columns=TREND_COLUMNS)


def all_trends(scores, n_bins=10, min_count=5) -> pd.DataFrame:
    """Every population x flag combination stacked in one table."""
    frames = [trends_frame(bin_trends(scores, p, f, n_bins, min_count))
              for f in FLAGS for p in POPULATIONS]
    return pd.concat(frames, ignore_index=True)

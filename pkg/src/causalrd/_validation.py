"""Small argument checks shared by the estimators and the functional API."""

import numbers

import numpy as np

FALLBACK_MODES = ("paper-literal", "expected-negative")


def check_positive_int(value, name, minimum=1):
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_alpha(alpha):
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha < 0:
        raise ValueError(f"alpha must be a finite real >= 0, got {alpha}")
    return alpha


def check_fraction(value, name="fraction"):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_max_distance(m):
    if m is None:
        return None
    m = float(m)
    if np.isnan(m) or m <= 0:
        raise ValueError(f"max_distance must be a positive real, got {m}")
    return None if np.isinf(m) else m


def check_fallback(mode):
    if mode not in FALLBACK_MODES:
        raise ValueError(f"fallback must be one of {FALLBACK_MODES}, got {mode!r}")
    return mode


def check_clip_epsilon(eps):
    eps = float(eps)
    if not 0.0 < eps < 0.5:
        raise ValueError(f"clip_epsilon must lie in (0, 0.5), got {eps}")
    return eps


def check_dataset(dataset, *, normalized=False, nonempty=False):
    from .dataset import Dataset
    from .exceptions import NotNormalizedError

    if not isinstance(dataset, Dataset):
        raise TypeError(f"expected a Dataset, got {type(dataset).__name__}")
    if normalized and not dataset.normalized:
        raise NotNormalizedError(
            "dataset must be normalized first (see normalize_numeric)")
    if nonempty and len(dataset) == 0:
        raise ValueError("dataset is empty")
    return dataset

import io
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from causalrd.dataset import make_dataset

DATA_DIR = Path(__file__).parent / "data"
CONFIG_DIR = Path(__file__).parent.parent / "configs"

TINY_SCHEMA = {
    "attributes": [
        {"name": "age", "kind": "numeric"},
        {"name": "sex", "kind": "categorical"},
        {"name": "job", "kind": "categorical"},
        {"name": "income", "kind": "categorical", "levels": ["<=50K", ">50K"]},
    ],
    "group": {"attribute": "sex", "protected": "F"},
    "decision": {"attribute": "income", "positive": {"values": [">50K"]}},
}

TINY_CSV = """age,sex,job,income
25,F,clerk,<=50K
40,M,manager,>50K
33,F,manager,>50K
"""


@pytest.fixture
def tiny_schema():
    return dict(TINY_SCHEMA)


@pytest.fixture
def tiny_csv():
    return io.StringIO(TINY_CSV)


def random_dataset(n, seed, n_numeric=2, n_categorical=2, n_levels=3, grid=None):
    """Normalized mixed-type dataset; ``grid`` rounds numerics to force ties."""
    rng = np.random.default_rng(seed)
    cols = {}
    for j in range(n_numeric):
        x = rng.random(n)
        if grid:
            x = np.round(x * grid) / grid
        cols[f"x{j}"] = x
    for j in range(n_categorical):
        cols[f"c{j}"] = rng.choice([f"l{v}" for v in range(n_levels)], n)
    protected = rng.random(n) < 0.4
    positive = rng.random(n) < 0.5
    if n >= 2:
        protected[0], protected[1] = True, False
    return unit_dataset(pd.DataFrame(cols), protected, positive)


def unit_dataset(covariates, protected, positive):
    """Dataset whose numeric columns are taken as already scaled to [0, 1]."""
    data = make_dataset(covariates, protected, positive)
    return replace(data, normalization={a: (0.0, 1.0) for a in data.numeric_covariates})


def random_tree_fixture(seed, n=None):
    """Mixed frame of up to 200 rows and 4 attributes, labels, min_leaf, max_depth."""
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(10, 201))
    n_attr = int(rng.integers(1, 5))
    cols = {}
    for j in range(n_attr):
        if rng.random() < 0.5:
            cols[f"a{j}"] = np.round(rng.random(n) * rng.integers(2, 20), 1)
        else:
            cols[f"a{j}"] = rng.choice([f"v{i}" for i in range(rng.integers(2, 5))], n)
    X = pd.DataFrame(cols)
    y = rng.normal(size=n) + (X.iloc[:, 0] == X.iloc[0, 0]).to_numpy()
    return X, y, int(rng.integers(1, 8)), int(rng.integers(1, 5))


@pytest.fixture(scope="session")
def adult_config_path():
    return CONFIG_DIR / "adult.yaml"


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

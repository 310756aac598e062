"""Build the seeded Adult subsample used by the desk-scale tests.

usage: python scripts/make_adult_subsample.py path/to/adult.data tests/data/adult_5000.csv

Rows containing missing values ('?') are dropped first, then 5,000 rows are
drawn without replacement with numpy's PCG64 seeded at 0 and written in their
original order with a header row.
"""

import csv
import sys

import numpy as np

COLUMNS = ["age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
           "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
           "hours-per-week", "native-country", "income"]


def main(src, dest, n=5000, seed=0):
    with open(src, newline="") as fh:
        rows = [[t.strip() for t in r] for r in csv.reader(fh) if len(r) == len(COLUMNS)]
    rows = [r for r in rows if "?" not in r]
    for r in rows:
        r[-1] = r[-1].rstrip(".")
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = np.sort(rng.choice(len(rows), size=n, replace=False))
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        w.writerows(rows[i] for i in idx)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])

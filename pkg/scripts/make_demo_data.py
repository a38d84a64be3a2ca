#!/usr/bin/env python3
"""Regenerate the bundled demo tables in data/ (fixed seeds, 200 rows each).

discrete_demo.csv: two-arm observational data where arm "b" wins iff
x1 < 0, assignment biased toward the better arm. dose_demo.csv: one
continuous price-like dose in (-4, 4) with outcome |x1 - dose| plus noise.
"""

import csv
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "data")
N = 200


def write_table(path, header, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(columns[0])):
            writer.writerow([f"{col[i]:.6g}" if isinstance(col[i], float) else col[i]
                             for col in columns])


def main():
    os.makedirs(OUT_DIR, exist_ok=True)
    rng = np.random.default_rng(20240517)
    X = np.column_stack([
        rng.normal(size=N), rng.integers(0, 2, N).astype(float),
        rng.normal(size=N), rng.integers(0, 2, N).astype(float),
        rng.normal(size=N),
    ])
    effect = np.where(X[:, 0] < 0, -1.0, 1.0)  # arm b helps iff x1 < 0
    p_b = 1.0 / (1.0 + np.exp(effect))
    z = (rng.random(N) < p_b).astype(int)
    y = 0.5 * X[:, 2] + np.where(z == 1, effect, 0.0) + rng.normal(0, 0.1, N)
    write_table(
        os.path.join(OUT_DIR, "discrete_demo.csv"),
        ["x1", "x2", "x3", "x4", "x5", "treatment", "outcome"],
        [list(map(float, X[:, j])) for j in range(5)]
        + [["b" if v else "a" for v in z], list(map(float, y))],
    )

    rng = np.random.default_rng(20240518)
    Xd = np.column_stack([
        rng.normal(size=N), rng.integers(0, 2, N).astype(float),
        rng.normal(size=N), rng.integers(0, 2, N).astype(float),
        rng.normal(size=N),
    ])
    dose = rng.uniform(-4, 4, N)
    yd = np.abs(Xd[:, 0] - dose) + rng.normal(0, 0.1, N)
    write_table(
        os.path.join(OUT_DIR, "dose_demo.csv"),
        ["x1", "x2", "x3", "x4", "x5", "dose", "outcome"],
        [list(map(float, Xd[:, j])) for j in range(5)]
        + [list(map(float, dose)), list(map(float, yd))],
    )
    print(f"wrote {OUT_DIR}/discrete_demo.csv and {OUT_DIR}/dose_demo.csv")


if __name__ == "__main__":
    main()

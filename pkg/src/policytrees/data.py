"""Core data containers: observational datasets, treatment spaces, reward matrices.

Conventions used throughout the package:

* outcomes are costs: lower is always better (negate on ingestion to maximize);
* treatment options are indexed 0..T-1, with human-readable candidate labels
  kept alongside;
* all containers are immutable after construction and safe to share across
  workers.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InputError, ParseError


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def as_float_matrix(values, name: str) -> np.ndarray:
    """Coerce to a 2-D float array, rejecting non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise InputError(f"{name} contains a non-finite value at row {bad[0]}, column {bad[1]}")
    return arr


def as_float_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InputError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr))[0][0])
        raise InputError(f"{name} contains a non-finite value at position {bad}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Observational triple (features, observed treatment, observed outcome).

    Parameters
    ----------
    features : array, shape (n, p)
        Real-valued covariates, no non-finite entries.
    outcomes : array, shape (n,)
        Observed outcome per row; lower is better.
    treatments : array, shape (n,) of int or (n, m) of float
        Discrete treatment indices in {0..m-1}, or continuous dose vectors.
    feature_names : sequence of str, optional
        Defaults to "x1".."xp".
    """

    features: np.ndarray
    outcomes: np.ndarray
    treatments: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = as_float_matrix(self.features, "features")
        y = as_float_vector(self.outcomes, "outcomes")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise InputError(f"features must be non-empty, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise InputError(
                f"outcomes has {y.shape[0]} rows but features has {X.shape[0]}"
            )
        z = np.asarray(self.treatments)
        if z.ndim == 1:
            if not np.issubdtype(z.dtype, np.integer):
                if not np.all(z == np.floor(z)):
                    raise InputError("discrete treatments must be integers")
                z = z.astype(np.int64)
            else:
                z = z.astype(np.int64)
            if z.shape[0] != X.shape[0]:
                raise InputError("treatments row count does not match features")
            if z.min() < 0:
                raise InputError("discrete treatment indices must be non-negative")
        elif z.ndim == 2:
            z = as_float_matrix(z, "treatments")
            if z.shape[0] != X.shape[0]:
                raise InputError("treatments row count does not match features")
        else:
            raise InputError("treatments must be a vector of labels or a matrix of doses")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise InputError(
                f"{len(names)} feature names for {X.shape[1]} feature columns"
            )
        object.__setattr__(self, "features", _freeze(X))
        object.__setattr__(self, "outcomes", _freeze(y))
        object.__setattr__(self, "treatments", _freeze(z))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def is_discrete(self) -> bool:
        return self.treatments.ndim == 1

    @property
    def n_treatments(self) -> int:
        """Number of treatment arms implied by the observed labels (discrete only)."""
        if not self.is_discrete:
            raise InputError("n_treatments is only defined for discrete treatments")
        return int(self.treatments.max()) + 1


@dataclass(frozen=True)
class TreatmentSpace:
    """Candidate prescription options: a discrete label set, or dose grids.

    For continuous treatments the prescribable candidates are the cross
    product of the per-treatment dose grids.
    """

    kind: str
    labels: tuple[str, ...]
    ranges: tuple[tuple[float, float], ...] | None = None
    grids: tuple[tuple[float, ...], ...] | None = None

    DEFAULT_GRID_SIZE = 10

    @classmethod
    def discrete(cls, labels: Sequence[str]) -> "TreatmentSpace":
        labels = tuple(str(s) for s in labels)
        if len(labels) < 2:
            raise ConfigError("a discrete treatment space needs at least 2 options")
        if len(set(labels)) != len(labels):
            raise ConfigError("treatment labels must be unique")
        return cls(kind="discrete", labels=labels)

    @classmethod
    def continuous(cls, doses: Iterable) -> "TreatmentSpace":
        """Build from per-treatment specs (name, lo, hi[, grid_or_size]).

        The optional fourth element is either an explicit candidate-dose grid
        or a grid size; by default the range is discretized into
        ``DEFAULT_GRID_SIZE`` evenly spaced values.
        """
        names, ranges, grids = [], [], []
        for spec in doses:
            if len(spec) == 3:
                name, lo, hi = spec
                grid = np.linspace(lo, hi, cls.DEFAULT_GRID_SIZE)
            else:
                name, lo, hi, g = spec
                grid = np.linspace(lo, hi, int(g)) if np.isscalar(g) else np.asarray(g, dtype=float)
            lo, hi = float(lo), float(hi)
            if not lo < hi:
                raise ConfigError(f"dose range for {name!r} must satisfy lo < hi")
            if grid.size == 0:
                raise ConfigError(f"empty candidate-dose grid for treatment {name!r}")
            if np.any(np.diff(grid) <= 0):
                raise ConfigError(f"candidate-dose grid for {name!r} must be strictly increasing")
            if grid[0] < lo or grid[-1] > hi:
                raise ConfigError(f"candidate-dose grid for {name!r} leaves [{lo}, {hi}]")
            names.append(str(name))
            ranges.append((lo, hi))
            grids.append(tuple(float(v) for v in grid))
        if not names:
            raise ConfigError("a continuous treatment space needs at least one treatment")
        if len(set(names)) != len(names):
            raise ConfigError("treatment names must be unique")
        return cls(kind="continuous", labels=tuple(names), ranges=tuple(ranges), grids=tuple(grids))

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def n_candidates(self) -> int:
        if self.is_discrete:
            return len(self.labels)
        return int(np.prod([len(g) for g in self.grids]))

    def candidate_doses(self) -> np.ndarray:
        """All prescribable dose combinations, shape (T, m); first dose varies slowest."""
        if self.is_discrete:
            raise ConfigError("candidate_doses is only defined for continuous spaces")
        combos = list(itertools.product(*self.grids))
        return np.asarray(combos, dtype=np.float64)

    def candidate_labels(self) -> tuple[str, ...]:
        if self.is_discrete:
            return self.labels
        out = []
        for combo in itertools.product(*self.grids):
            out.append("|".join(f"{n}={v:g}" for n, v in zip(self.labels, combo)))
        return tuple(out)


@dataclass(frozen=True)
class RewardMatrix:
    """Estimated (or known) outcome of every observation under every candidate.

    ``values[i, t]`` is the outcome of observation ``i`` under candidate
    ``t``; lower is better.
    """

    values: np.ndarray
    candidate_labels: tuple[str, ...]

    def __post_init__(self):
        vals = as_float_matrix(self.values, "reward values")
        labels = tuple(str(s) for s in self.candidate_labels)
        if vals.shape[1] < 2:
            raise InputError("a reward matrix needs at least 2 candidate columns")
        if len(labels) != vals.shape[1]:
            raise InputError(
                f"{len(labels)} candidate labels for {vals.shape[1]} reward columns"
            )
        if len(set(labels)) != len(labels):
            raise InputError("candidate labels must be unique")
        object.__setattr__(self, "values", _freeze(vals))
        object.__setattr__(self, "candidate_labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def n_candidates(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path) -> None:
        """Write as delimited text: one header row of candidate labels, then values."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.candidate_labels)
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "RewardMatrix":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ParseError(f"{path}: empty rewards file") from None
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ParseError(
                        f"{path}: line {lineno} has {len(row)} cells, expected {len(header)}"
                    )
                try:
                    rows.append([float(c) for c in row])
                except ValueError as exc:
                    raise ParseError(f"{path}: line {lineno}: {exc}") from None
        if not rows:
            raise ParseError(f"{path}: rewards file has a header but no data rows")
        return cls(values=np.asarray(rows), candidate_labels=tuple(header))


@dataclass(frozen=True)
class Hyperparameters:
    """Tree-training controls: depth cap, complexity penalty, leaf minimum."""

    max_depth: int
    alpha: float = 0.0
    min_leaf: int = 1
    restarts: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 0:
            raise ConfigError(f"max_depth must be >= 0, got {self.max_depth}")
        if not self.alpha >= 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.restarts < 1:
            raise ConfigError(f"restarts must be >= 1, got {self.restarts}")

"""Synthetic prescription problems with known ground truth.

Features are 10-dimensional: odd-numbered coordinates (x1, x3, ...) are
standard normal, even-numbered (x2, x4, ...) are Bernoulli(0.5). Outcome
builders come in two catalogs: the ``f1``..``f8`` functions of the
discrete-treatment experiments (used standardized to zero mean / unit
variance) and the dose-dependent ``g1``..``g4`` functions of the
continuous experiments over doses in (-4, 4). Training assignments are
biased toward better treatments; oracle sets carry noise-free outcomes
for every candidate so regret is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, TreatmentSpace
from .errors import ConfigError, InputError

FEATURE_DIM = 10
DOSE_RANGE = (-4.0, 4.0)
SINGLE_DOSE_GRID = 10
PAIR_DOSE_GRID = 6
STANDARDIZE_SAMPLE = 100_000
N_ASSIGNMENT_CANDIDATES = 5


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def sample_features(n: int, seed_or_rng=0) -> np.ndarray:
    """n x 10 feature draws: odd coordinates N(0,1), even Bernoulli(0.5)."""
    if n < 1:
        raise InputError(f"need n >= 1, got {n}")
    rng = _rng(seed_or_rng)
    X = np.empty((n, FEATURE_DIM))
    X[:, 0::2] = rng.normal(size=(n, FEATURE_DIM // 2))
    X[:, 1::2] = rng.integers(0, 2, size=(n, FEATURE_DIM // 2)).astype(float)
    return X


def _check_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != FEATURE_DIM:
        raise InputError(f"synthetic outcome functions need {FEATURE_DIM} features, got {X.shape[1]}")
    return X


def eval_f(fid: str, X) -> np.ndarray:
    """Outcome builders for the discrete-treatment experiments (pre-standardization)."""
    X = _check_features(X)
    x1, x2, x3, x4, x5 = X[:, 0], X[:, 1], X[:, 2], X[:, 3], X[:, 4]
    x6, x7, x8, x9 = X[:, 5], X[:, 6], X[:, 7], X[:, 8]
    if fid == "f1":
        return np.zeros(X.shape[0])
    if fid == "f2":
        return 5.0 * (x1 > 1) - 5.0
    if fid == "f3":
        return 2.0 * x1 - 4.0
    if fid == "f4":
        return (x2 * x4 * x6 + 2 * x2 * x4 * (1 - x6) + 3 * x2 * (1 - x4) * x6
                + 4 * x2 * (1 - x4) * (1 - x6) + 5 * (1 - x2) * x4 * x6
                + 6 * (1 - x2) * x4 * (1 - x6) + 7 * (1 - x2) * (1 - x4) * x6
                + 8 * (1 - x2) * (1 - x4) * (1 - x6))
    if fid == "f5":
        return x1 + x3 + x5 + x7 + x9 - 2.0
    if fid == "f6":
        return 4.0 * (x1 > 1) * (x3 > 0) + 4.0 * (x5 > 1) * (x7 > 0) + 2.0 * x8 * x9
    if fid == "f7":
        return 0.5 * (x1**2 + x2 + x3**2 + x4 + x5**2 + x6 + x7**2 + x8 + x9**2 - 11.0)
    if fid == "f8":
        return (eval_f("f4", X) + eval_f("f5", X)) / np.sqrt(2.0)
    raise ConfigError(f"unknown outcome function {fid!r}; expected f1..f8")


def eval_g(gid: str, X, t) -> np.ndarray:
    """Dose-dependent outcome builders for the continuous experiments."""
    X = _check_features(X)
    t = np.asarray(t, dtype=np.float64)
    x1, x2, x3, x4 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    x5, x6, x7, x9 = X[:, 4], X[:, 5], X[:, 6], X[:, 8]
    if gid == "g1":
        return np.abs(x1 - t)
    if gid == "g2":
        return x1 * t
    if gid == "g3":
        return (np.abs(t - 4) * x2 * x4 * x6 + np.abs(t - 3) * x2 * x4 * (1 - x6)
                + np.abs(t - 2) * x2 * (1 - x4) * x6 + np.abs(t - 1) * x2 * (1 - x4) * (1 - x6)
                + np.abs(t + 1) * (1 - x2) * x4 * x6 + np.abs(t + 2) * (1 - x2) * x4 * (1 - x6)
                + np.abs(t + 3) * (1 - x2) * (1 - x4) * x6
                + np.abs(t + 4) * (1 - x2) * (1 - x4) * (1 - x6))
    if gid == "g4":
        return (np.abs(t - 2) * (x1 > 1) * (x3 > 0) + np.abs(t + 2) * (x5 > 1) * (x7 > 0)
                + 2.0 * np.abs(x9 - t))
    raise ConfigError(f"unknown outcome function {gid!r}; expected g1..g4")


@dataclass(frozen=True)
class StandardizedFunction:
    """An f-function recentred/rescaled to zero mean and unit variance.

    Constant functions (sigma == 0) map to identically zero.
    """

    fid: str
    mu: float
    sigma: float

    def __call__(self, X) -> np.ndarray:
        raw = eval_f(self.fid, X)
        if self.sigma == 0.0:
            return np.zeros_like(raw)
        return (raw - self.mu) / self.sigma


def standardize_f(fid: str, reference_sample) -> StandardizedFunction:
    """Estimate standardization constants on a reference feature sample."""
    ref = _check_features(reference_sample)
    vals = eval_f(fid, ref)
    return StandardizedFunction(fid=fid, mu=float(vals.mean()), sigma=float(vals.std()))


# ---------------------------------------------------------------------------
# generator families


@dataclass(frozen=True)
class BinaryTreatment:
    baseline: str
    effect: str


@dataclass(frozen=True)
class MultiDiscrete:
    baseline: str
    effect1: str
    effect2: str


@dataclass(frozen=True)
class SingleContinuous:
    outcome: str


@dataclass(frozen=True)
class MultiContinuous:
    outcome1: str
    outcome2: str


@dataclass(frozen=True)
class GeneratorSpec:
    """One synthetic problem instance: family, training size, noise, seed."""

    family: object
    n_train: int
    noise_sd: float = 0.1
    seed: int = 0
    n_test: int = 10_000

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("n_train and n_test must be >= 1")
        if self.noise_sd < 0:
            raise ConfigError(f"noise_sd must be >= 0, got {self.noise_sd}")
        fam = self.family
        try:
            if isinstance(fam, BinaryTreatment):
                eval_f(fam.baseline, np.zeros((1, FEATURE_DIM)))
                eval_f(fam.effect, np.zeros((1, FEATURE_DIM)))
            elif isinstance(fam, MultiDiscrete):
                for fid in (fam.baseline, fam.effect1, fam.effect2):
                    eval_f(fid, np.zeros((1, FEATURE_DIM)))
            elif isinstance(fam, SingleContinuous):
                eval_g(fam.outcome, np.zeros((1, FEATURE_DIM)), 0.0)
            elif isinstance(fam, MultiContinuous):
                eval_g(fam.outcome1, np.zeros((1, FEATURE_DIM)), 0.0)
                eval_g(fam.outcome2, np.zeros((1, FEATURE_DIM)), 0.0)
            else:
                raise ConfigError(f"unknown generator family {type(fam).__name__}")
        except InputError as exc:  # pragma: no cover - defensive
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class OracleSet:
    """Noise-free test-set truth: outcomes under every candidate option."""

    features: np.ndarray
    outcomes: np.ndarray
    optimal: np.ndarray
    candidate_labels: tuple[str, ...]
    candidate_doses: np.ndarray | None = None

    def __post_init__(self):
        if not np.array_equal(self.optimal, np.argmin(self.outcomes, axis=1)):
            raise InputError("oracle optimal column must be the row-wise argmin")


def _make_oracle(features, outcomes, labels, doses=None) -> OracleSet:
    return OracleSet(
        features=features,
        outcomes=outcomes,
        optimal=np.argmin(outcomes, axis=1),
        candidate_labels=tuple(labels),
        candidate_doses=doses,
    )


def _spec_streams(spec: GeneratorSpec):
    ref, train, test = np.random.SeedSequence(spec.seed).spawn(3)
    return (np.random.default_rng(ref), np.random.default_rng(train),
            np.random.default_rng(test))


def _pick_columns(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def binary_assignment_probability(y0: np.ndarray) -> np.ndarray:
    """P(Z = 1 | x) = exp(y0) / (1 + exp(y0)): worse baselines get treated more."""
    return 1.0 / (1.0 + np.exp(-np.asarray(y0)))


def multi_assignment_probabilities(y0: np.ndarray) -> np.ndarray:
    """Columns P(Z = 0), P(Z = 1), P(Z = 2); the active arms split the rest evenly."""
    p0 = 1.0 / (1.0 + np.exp(np.asarray(y0)))
    rest = 0.5 * (1.0 - p0)
    return np.column_stack([p0, rest, rest])


def softmax_choice(rng: np.random.Generator, values: np.ndarray) -> np.ndarray:
    """Sample one column per row with probability softmax(-values); lower wins more."""
    shifted = -(values - values.min(axis=1, keepdims=True))
    w = np.exp(shifted)
    probs = w / w.sum(axis=1, keepdims=True)
    return _pick_columns(probs, rng.random(values.shape[0]))


def generate_binary(spec: GeneratorSpec):
    """Single binary treatment: y0 = b - e/2, y1 = b + e/2, logistic assignment."""
    if not isinstance(spec.family, BinaryTreatment):
        raise ConfigError("generate_binary needs a BinaryTreatment family")
    ref_rng, train_rng, test_rng = _spec_streams(spec)
    ref = sample_features(STANDARDIZE_SAMPLE, ref_rng)
    baseline = standardize_f(spec.family.baseline, ref)
    effect = standardize_f(spec.family.effect, ref)

    X = sample_features(spec.n_train, train_rng)
    b, e = baseline(X), effect(X)
    y0, y1 = b - 0.5 * e, b + 0.5 * e
    z = (train_rng.random(spec.n_train) < binary_assignment_probability(y0)).astype(np.int64)
    observed = np.where(z == 1, y1, y0) + train_rng.normal(0.0, spec.noise_sd, spec.n_train)
    ds = Dataset(features=X, outcomes=observed, treatments=z)

    Xt = sample_features(spec.n_test, test_rng)
    bt, et = baseline(Xt), effect(Xt)
    outcomes = np.column_stack([bt - 0.5 * et, bt + 0.5 * et])
    return ds, _make_oracle(Xt, outcomes, ("t0", "t1"))


def generate_multi_discrete(spec: GeneratorSpec):
    """Three arms: y0 = b, y1 = b + e1, y2 = b + e2; logistic no-treatment arm."""
    if not isinstance(spec.family, MultiDiscrete):
        raise ConfigError("generate_multi_discrete needs a MultiDiscrete family")
    ref_rng, train_rng, test_rng = _spec_streams(spec)
    ref = sample_features(STANDARDIZE_SAMPLE, ref_rng)
    baseline = standardize_f(spec.family.baseline, ref)
    effect1 = standardize_f(spec.family.effect1, ref)
    effect2 = standardize_f(spec.family.effect2, ref)

    X = sample_features(spec.n_train, train_rng)
    b = baseline(X)
    ys = np.column_stack([b, b + effect1(X), b + effect2(X)])
    probs = multi_assignment_probabilities(ys[:, 0])
    z = _pick_columns(probs, train_rng.random(spec.n_train))
    observed = ys[np.arange(spec.n_train), z] + train_rng.normal(0.0, spec.noise_sd, spec.n_train)
    ds = Dataset(features=X, outcomes=observed, treatments=z)

    Xt = sample_features(spec.n_test, test_rng)
    bt = baseline(Xt)
    outcomes = np.column_stack([bt, bt + effect1(Xt), bt + effect2(Xt)])
    return ds, _make_oracle(Xt, outcomes, ("t0", "t1", "t2"))


def method_dose_space(family) -> TreatmentSpace:
    """Candidate-dose grid every method prescribes from (10 points single, 6 x 6 pairs)."""
    lo, hi = DOSE_RANGE
    if isinstance(family, SingleContinuous):
        return TreatmentSpace.continuous([("dose", lo, hi, SINGLE_DOSE_GRID)])
    if isinstance(family, MultiContinuous):
        return TreatmentSpace.continuous([
            ("dose1", lo, hi, PAIR_DOSE_GRID),
            ("dose2", lo, hi, PAIR_DOSE_GRID),
        ])
    raise ConfigError("dose spaces exist only for continuous families")


def _continuous_outcome_fn(family):
    if isinstance(family, SingleContinuous):
        return lambda X, D: eval_g(family.outcome, X, D[:, 0])
    return lambda X, D: eval_g(family.outcome1, X, D[:, 0]) + eval_g(family.outcome2, X, D[:, 1])


def generate_continuous(spec: GeneratorSpec):
    """Continuous doses: five uniform candidate doses per row, softmax assignment.

    The oracle evaluates the true outcome on the method-facing candidate
    grid, so a policy prescribing the best grid dose attains zero regret.
    """
    if not isinstance(spec.family, (SingleContinuous, MultiContinuous)):
        raise ConfigError("generate_continuous needs a continuous family")
    _, train_rng, test_rng = _spec_streams(spec)
    m = 1 if isinstance(spec.family, SingleContinuous) else 2
    outcome = _continuous_outcome_fn(spec.family)
    lo, hi = DOSE_RANGE

    X = sample_features(spec.n_train, train_rng)
    candidates = train_rng.uniform(lo, hi, size=(spec.n_train, N_ASSIGNMENT_CANDIDATES, m))
    values = np.stack(
        [outcome(X, candidates[:, k, :]) for k in range(N_ASSIGNMENT_CANDIDATES)], axis=1
    )
    chosen = softmax_choice(train_rng, values)
    doses = candidates[np.arange(spec.n_train), chosen, :]
    observed = values[np.arange(spec.n_train), chosen] + train_rng.normal(
        0.0, spec.noise_sd, spec.n_train
    )
    ds = Dataset(features=X, outcomes=observed, treatments=doses)

    space = method_dose_space(spec.family)
    combos = space.candidate_doses()
    Xt = sample_features(spec.n_test, test_rng)
    outcomes = np.column_stack([outcome(Xt, np.broadcast_to(c, (spec.n_test, m))) for c in combos])
    return ds, _make_oracle(Xt, outcomes, space.candidate_labels(), doses=combos)


def generate(spec: GeneratorSpec):
    """Dispatch on the family type; returns (training Dataset, OracleSet)."""
    if isinstance(spec.family, BinaryTreatment):
        return generate_binary(spec)
    if isinstance(spec.family, MultiDiscrete):
        return generate_multi_discrete(spec)
    return generate_continuous(spec)


def mean_regret(prescriptions, oracle: OracleSet) -> float:
    """Average gap between the prescribed outcome and the per-row best outcome."""
    presc = np.asarray(prescriptions)
    if presc.ndim != 1 or presc.shape[0] != oracle.features.shape[0]:
        raise InputError("one prescription per oracle row is required")
    if not np.issubdtype(presc.dtype, np.integer):
        raise InputError("prescriptions must be candidate indices")
    T = oracle.outcomes.shape[1]
    if presc.min() < 0 or presc.max() >= T:
        bad = int(np.argmax((presc < 0) | (presc >= T)))
        raise InputError(
            f"prescription {int(presc[bad])} at row {bad} is outside the {T} candidates"
        )
    rows = np.arange(presc.shape[0])
    return float((oracle.outcomes[rows, presc] - oracle.outcomes.min(axis=1)).mean())

"""Turning observational data into a complete reward matrix.

Discrete treatments get the doubly-robust construction: cross-fit
propensities, per-arm outcome models, then

    values[i, t] = (y_i - yhat_it) / phat_it * 1{z_i = t} + yhat_it

Continuous doses get a single regression over [features || doses],
evaluated on every candidate dose combination. Binary outcomes swap the
regressors for classifiers whose event probabilities serve as outcomes,
and weighted-loss classification reads rewards straight from a penalty
matrix.

Estimators are pluggable: any callables matching the
:mod:`policytrees.forest` fit/predict surface can replace the built-in
forest via the ``classifier``/``regressor`` arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, RewardMatrix, TreatmentSpace, as_float_matrix
from .errors import ConfigError, InputError
from .forest import ForestConfig, fit_classifier, fit_regressor

DEFAULT_CLIP = (0.01, 1.0)


def _seed_stream(seed: int, tag: int, count: int) -> list[int]:
    state = np.random.SeedSequence([int(seed), int(tag)]).generate_state(count, dtype=np.uint32)
    return [int(s & 0x7FFFFFFF) for s in state]


def default_treatment_labels(n_treatments: int) -> tuple[str, ...]:
    return tuple(f"t{k}" for k in range(n_treatments))


@dataclass(frozen=True)
class PropensityEstimate:
    """Cross-fit assignment probabilities.

    ``probs[i, t]`` is the clipped probability that row ``i`` receives
    treatment ``t``, produced by a classifier that never saw row ``i``
    (fold bookkeeping in ``folds``). Probabilities are renormalized to sum
    to one and then clipped into ``clip_bounds``, so the stored rows may
    sum to slightly more than one when clipping binds.
    """

    probs: np.ndarray
    folds: np.ndarray
    clip_bounds: tuple[float, float]

    def __post_init__(self):
        probs = as_float_matrix(self.probs, "propensities")
        folds = np.asarray(self.folds, dtype=np.int64)
        if folds.shape != (probs.shape[0],):
            raise InputError("fold assignment must have one entry per row")
        lo, hi = self.clip_bounds
        if probs.min() < lo - 1e-12 or probs.max() > hi + 1e-12:
            raise InputError("propensities leave the declared clip bounds")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "folds", folds)

    @property
    def n_folds(self) -> int:
        return int(self.folds.max()) + 1


@dataclass(frozen=True)
class OutcomeEstimate:
    """Counterfactual outcome predictions, one regressor per arm.

    ``preds[i, t]`` estimates row ``i``'s outcome under arm ``t``; model
    ``t`` was trained on exactly the rows with ``z_i == t``.
    """

    preds: np.ndarray
    per_treatment_models: tuple

    def __post_init__(self):
        preds = as_float_matrix(self.preds, "outcome estimates")
        if len(self.per_treatment_models) != preds.shape[1]:
            raise InputError("one fitted model per treatment arm is required")
        object.__setattr__(self, "preds", preds)
        object.__setattr__(self, "per_treatment_models", tuple(self.per_treatment_models))

    def predict_matrix(self, X) -> np.ndarray:
        """Per-arm predictions on new features (the regress-and-compare surface)."""
        return np.column_stack([m.predict(X) for m in self.per_treatment_models])


@dataclass(frozen=True)
class PenaltyMatrix:
    """K x K penalties: entry (j, k) is the cost of assigning class j to class k."""

    values: np.ndarray
    class_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        vals = as_float_matrix(self.values, "penalty matrix")
        if vals.shape[0] != vals.shape[1] or vals.shape[0] < 2:
            raise InputError(f"penalty matrix must be square with K >= 2, got {vals.shape}")
        if self.class_labels is not None:
            labels = tuple(str(s) for s in self.class_labels)
            if len(labels) != vals.shape[0]:
                raise InputError("class_labels length does not match the penalty matrix")
            object.__setattr__(self, "class_labels", labels)
        object.__setattr__(self, "values", vals)

    @property
    def n_classes(self) -> int:
        return self.values.shape[0]


def _require_discrete(ds: Dataset, n_treatments=None) -> int:
    if not ds.is_discrete:
        raise InputError("this estimator requires discrete treatments")
    T = int(n_treatments) if n_treatments is not None else ds.n_treatments
    if ds.treatments.max() >= T:
        raise InputError(
            f"observed treatment {int(ds.treatments.max())} outside the declared {T} arms"
        )
    if T < 2:
        raise InputError("need at least 2 treatment arms")
    return T


def stratified_folds(treatments: np.ndarray, k_folds: int, seed: int) -> np.ndarray:
    """Fold ids balanced within every treatment arm (prevents empty-arm folds)."""
    rng = np.random.default_rng(seed)
    folds = np.full(treatments.shape[0], -1, dtype=np.int64)
    offset = 0
    for t in np.unique(treatments):
        rows = np.flatnonzero(treatments == t)
        rows = rows[rng.permutation(rows.size)]
        folds[rows] = (np.arange(rows.size) + offset) % k_folds
        offset += rows.size
    return folds


def estimate_propensity(ds: Dataset, k_folds: int = 5, cfg: ForestConfig = ForestConfig(),
                        clip: tuple[float, float] = DEFAULT_CLIP,
                        n_treatments=None, classifier=fit_classifier) -> PropensityEstimate:
    """Cross-fit treatment-assignment probabilities.

    Rows in fold f are scored by a classifier fit on all rows outside f;
    folds are stratified by treatment. Raw probabilities are renormalized
    and clipped into ``clip`` (low clipping bounds the doubly-robust
    variance), so stored entries sit in [clip[0], clip[1]] exactly.
    """
    T = _require_discrete(ds, n_treatments)
    if k_folds < 2:
        raise ConfigError(f"k_folds must be >= 2, got {k_folds}")
    lo, hi = float(clip[0]), float(clip[1])
    if not 0.0 <= lo < hi <= 1.0:
        raise ConfigError(f"clip bounds must satisfy 0 <= lo < hi <= 1, got {clip}")
    z = ds.treatments
    counts = np.bincount(z, minlength=T)
    small = np.flatnonzero((counts > 0) & (counts < k_folds))
    if small.size:
        raise InputError(
            f"treatment arm {int(small[0])} has only {int(counts[small[0]])} rows, "
            f"fewer than k_folds={k_folds}; folds are stratified by treatment, so every "
            f"arm needs at least k_folds rows"
        )
    folds = stratified_folds(z, k_folds, cfg.seed)
    fold_seeds = _seed_stream(cfg.seed, 101, k_folds)
    classes = tuple(range(T))
    probs = np.empty((ds.n, T))
    for f in range(k_folds):
        held = folds == f
        model = classifier(ds.features[~held], z[~held], cfg.reseeded(fold_seeds[f]),
                           classes=classes)
        probs[held] = model.predict_proba(ds.features[held])
    row_sums = probs.sum(axis=1, keepdims=True)
    if np.any(row_sums <= 0):
        raise InputError("propensity classifier produced an all-zero probability row")
    probs = np.clip(probs / row_sums, lo, hi)
    return PropensityEstimate(probs=probs, folds=folds, clip_bounds=(lo, hi))


def estimate_outcomes(ds: Dataset, cfg: ForestConfig = ForestConfig(),
                      n_treatments=None, regressor=fit_regressor) -> OutcomeEstimate:
    """Per-arm outcome regressions evaluated on every row (observed and counterfactual)."""
    T = _require_discrete(ds, n_treatments)
    z = ds.treatments
    arm_seeds = _seed_stream(cfg.seed, 202, T)
    models, columns = [], []
    for t in range(T):
        rows = np.flatnonzero(z == t)
        if rows.size < 2 * cfg.min_leaf:
            raise InputError(
                f"treatment arm {t} has {rows.size} rows, fewer than "
                f"2 * min_leaf = {2 * cfg.min_leaf} required to fit its outcome model"
            )
        model = regressor(ds.features[rows], ds.outcomes[rows], cfg.reseeded(arm_seeds[t]))
        models.append(model)
        columns.append(model.predict(ds.features))
    return OutcomeEstimate(preds=np.column_stack(columns), per_treatment_models=tuple(models))


def doubly_robust_rewards(ds: Dataset, prop: PropensityEstimate, out: OutcomeEstimate,
                          candidate_labels=None) -> RewardMatrix:
    """Combine propensities and outcome estimates into the reward matrix."""
    yhat = out.preds
    phat = prop.probs
    if yhat.shape != phat.shape:
        raise InputError(
            f"outcome estimates {yhat.shape} and propensities {phat.shape} disagree"
        )
    if yhat.shape[0] != ds.n:
        raise InputError("estimates do not match the dataset rows")
    T = _require_discrete(ds, yhat.shape[1])
    if np.any(phat <= 0):
        raise InputError("propensities must be strictly positive for the DR construction")
    observed = np.zeros((ds.n, T))
    observed[np.arange(ds.n), ds.treatments] = 1.0
    values = (ds.outcomes[:, None] - yhat) / phat * observed + yhat
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        i, t = bad[0]
        raise InputError(f"doubly-robust reward is non-finite at row {i}, treatment {t}")
    labels = tuple(candidate_labels) if candidate_labels is not None else default_treatment_labels(T)
    return RewardMatrix(values=values, candidate_labels=labels)


def estimate_discrete_rewards(ds: Dataset, k_folds: int = 5, cfg: ForestConfig = ForestConfig(),
                              clip: tuple[float, float] = DEFAULT_CLIP, n_treatments=None,
                              candidate_labels=None):
    """Full discrete pipeline; returns (rewards, propensities, outcomes)."""
    prop = estimate_propensity(ds, k_folds=k_folds, cfg=cfg, clip=clip, n_treatments=n_treatments)
    out = estimate_outcomes(ds, cfg=cfg, n_treatments=n_treatments)
    rewards = doubly_robust_rewards(ds, prop, out, candidate_labels=candidate_labels)
    return rewards, prop, out


def _require_doses(ds: Dataset, space: TreatmentSpace) -> np.ndarray:
    if ds.is_discrete:
        raise InputError("dose-based estimation requires continuous treatments")
    if space.is_discrete:
        raise InputError("a continuous treatment space is required")
    doses = ds.treatments
    if doses.shape[1] != len(space.labels):
        raise InputError(
            f"dataset has {doses.shape[1]} dose columns but the space declares "
            f"{len(space.labels)} treatments"
        )
    for k, (lo, hi) in enumerate(space.ranges):
        col = doses[:, k]
        if col.min() < lo or col.max() > hi:
            bad = int(np.argmax((col < lo) | (col > hi)))
            raise InputError(
                f"observed dose {col[bad]:g} for treatment {space.labels[k]!r} at row {bad} "
                f"is outside the declared range [{lo:g}, {hi:g}]"
            )
    return doses


def fit_dose_model(ds: Dataset, space: TreatmentSpace, cfg: ForestConfig = ForestConfig(),
                   regressor=fit_regressor, classifier=None):
    """One model over [features || observed doses] predicting the outcome.

    Observed doses enter raw (no rounding to the candidate grid). When
    ``classifier`` is given the outcome must be binary and the model
    predicts event probabilities instead.
    """
    doses = _require_doses(ds, space)
    stacked = np.hstack([ds.features, doses])
    if classifier is not None:
        labels = _require_binary(ds.outcomes)
        return classifier(stacked, labels, cfg, classes=(0, 1))
    return regressor(stacked, ds.outcomes, cfg)


def dose_rewards_from_model(model, X, space: TreatmentSpace) -> np.ndarray:
    """Predicted outcome of every candidate dose combination for each row of X."""
    X = as_float_matrix(X, "features")
    combos = space.candidate_doses()
    n = X.shape[0]
    values = np.empty((n, combos.shape[0]))
    for t, combo in enumerate(combos):
        stacked = np.hstack([X, np.broadcast_to(combo, (n, combo.shape[0]))])
        if getattr(model, "task", "regression") == "classification":
            values[:, t] = model.predict_proba(stacked)[:, 1]
        else:
            values[:, t] = model.predict(stacked)
    return values


def continuous_dose_rewards(ds: Dataset, space: TreatmentSpace,
                            cfg: ForestConfig = ForestConfig(),
                            regressor=fit_regressor) -> RewardMatrix:
    """Regression-based rewards over the candidate-dose cross product."""
    model = fit_dose_model(ds, space, cfg, regressor=regressor)
    values = dose_rewards_from_model(model, ds.features, space)
    return RewardMatrix(values=values, candidate_labels=space.candidate_labels())


def _require_binary(outcomes: np.ndarray) -> np.ndarray:
    uniq = np.unique(outcomes)
    if not np.all(np.isin(uniq, (0.0, 1.0))):
        raise InputError(f"binary-outcome estimation needs outcomes in {{0, 1}}, saw {uniq[:5]}")
    return outcomes.astype(np.int64)


def binary_outcome_rewards(ds: Dataset, space: TreatmentSpace,
                           cfg: ForestConfig = ForestConfig(),
                           classifier=fit_classifier) -> RewardMatrix:
    """Event probabilities as rewards when the outcome is a 0/1 indicator.

    Continuous spaces use one classifier over [features || doses]; discrete
    spaces use one classifier per arm, mirroring the outcome-regression
    layout. Lower reward = lower event probability, so encode the outcome
    with 1 as the event to avoid.
    """
    if space.is_discrete:
        labels01 = _require_binary(ds.outcomes)
        T = _require_discrete(ds, space.n_candidates)
        arm_seeds = _seed_stream(cfg.seed, 303, T)
        columns = []
        for t in range(T):
            rows = np.flatnonzero(ds.treatments == t)
            if rows.size < 2 * cfg.min_leaf:
                raise InputError(
                    f"treatment arm {t} has {rows.size} rows, fewer than "
                    f"2 * min_leaf = {2 * cfg.min_leaf}"
                )
            model = classifier(ds.features[rows], labels01[rows],
                               cfg.reseeded(arm_seeds[t]), classes=(0, 1))
            columns.append(model.predict_proba(ds.features)[:, 1])
        return RewardMatrix(values=np.column_stack(columns),
                            candidate_labels=space.candidate_labels())
    model = fit_dose_model(ds, space, cfg, classifier=classifier)
    values = dose_rewards_from_model(model, ds.features, space)
    return RewardMatrix(values=values, candidate_labels=space.candidate_labels())


def penalty_rewards(labels, penalties: PenaltyMatrix, candidate_labels=None) -> RewardMatrix:
    """Weighted-loss classification rewards: values[i, t] = penalties[z_i, t].

    Depends only on the observed class; with a 0/1 penalty matrix this is
    plain multi-class misclassification.
    """
    z = np.asarray(labels)
    if z.ndim != 1:
        raise InputError("class labels must be a vector")
    if not np.issubdtype(z.dtype, np.integer):
        if not np.all(z == np.floor(z)):
            raise InputError("class labels must be integers")
        z = z.astype(np.int64)
    K = penalties.n_classes
    if z.min() < 0 or z.max() >= K:
        bad = int(np.argmax((z < 0) | (z >= K)))
        raise InputError(
            f"label {int(z[bad])} at row {bad} is outside the penalty matrix classes 0..{K - 1}"
        )
    if candidate_labels is None:
        candidate_labels = penalties.class_labels or default_treatment_labels(K)
    return RewardMatrix(values=penalties.values[z], candidate_labels=candidate_labels)

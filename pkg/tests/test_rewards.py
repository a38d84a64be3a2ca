import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from policytrees.data import Dataset, RewardMatrix, TreatmentSpace
from policytrees.errors import ConfigError, InputError
from policytrees.forest import ForestConfig
from policytrees.rewards import (OutcomeEstimate, PenaltyMatrix, PropensityEstimate,
                                 _seed_stream, binary_outcome_rewards,
                                 continuous_dose_rewards, doubly_robust_rewards,
                                 estimate_outcomes, estimate_propensity, penalty_rewards,
                                 stratified_folds)
from policytrees.synthetic import sample_features


def make_discrete_ds(n, n_arms, seed, assign=None):
    rng = np.random.default_rng(seed)
    X = sample_features(n, rng)
    z = assign(X, rng) if assign else rng.integers(0, n_arms, n)
    y = rng.normal(size=n)
    return Dataset(features=X, outcomes=y, treatments=z)


class TestPropensity:
    def test_uniform_assignment_recovered(self):
        # true propensity is 1/3 by construction
        ds = make_discrete_ds(3000, 3, seed=0)
        est = estimate_propensity(ds, k_folds=5,
                                  cfg=ForestConfig(n_trees=100, min_leaf=25, seed=1))
        assert float(np.mean(np.abs(est.probs - 1 / 3))) < 0.05

    def test_deterministic_assignment_detected(self):
        ds = make_discrete_ds(1000, 2, seed=1,
                              assign=lambda X, rng: (X[:, 0] > 0).astype(np.int64))
        est = estimate_propensity(ds, k_folds=5, cfg=ForestConfig(n_trees=50, seed=2),
                                  clip=(0.0, 1.0))
        assigned = est.probs[np.arange(ds.n), ds.treatments]
        assert float(assigned.mean()) > 0.9

    def test_clip_floor_applied_exactly(self):
        ds = make_discrete_ds(400, 2, seed=2,
                              assign=lambda X, rng: (X[:, 0] > 0).astype(np.int64))
        est = estimate_propensity(ds, k_folds=4, cfg=ForestConfig(n_trees=30, seed=0),
                                  clip=(0.01, 1.0))
        assert est.probs.min() == 0.01  # deterministic arms produce raw zeros
        assert est.probs.max() <= 1.0

    def test_folds_partition_and_stratify(self):
        ds = make_discrete_ds(300, 3, seed=3)
        est = estimate_propensity(ds, k_folds=5, cfg=ForestConfig(n_trees=10, seed=4))
        assert est.folds.shape == (300,)
        assert set(np.unique(est.folds)) == set(range(5))
        for arm in range(3):
            present = np.unique(est.folds[ds.treatments == arm])
            assert set(present) == set(range(5))

    def test_cross_fitting_reproducible_from_bookkeeping(self):
        # fold rows are scored by a model fit outside the fold: refitting that
        # model by hand reproduces the stored probabilities bit for bit
        from policytrees.forest import fit_classifier

        ds = make_discrete_ds(240, 2, seed=5)
        cfg = ForestConfig(n_trees=20, seed=6)
        est = estimate_propensity(ds, k_folds=4, cfg=cfg, clip=(0.0, 1.0))
        fold_seeds = _seed_stream(cfg.seed, 101, 4)
        held = est.folds == 0
        model = fit_classifier(ds.features[~held], ds.treatments[~held],
                               cfg.reseeded(fold_seeds[0]), classes=(0, 1))
        raw = model.predict_proba(ds.features[held])
        stored = np.clip(raw / raw.sum(axis=1, keepdims=True), 0.0, 1.0)
        assert np.array_equal(est.probs[held], stored)

    def test_small_arm_raises_with_stratification_hint(self):
        X = np.random.default_rng(0).normal(size=(50, 2))
        z = np.r_[np.zeros(47, int), np.ones(3, int)]
        ds = Dataset(features=X, outcomes=np.zeros(50), treatments=z)
        with pytest.raises(InputError, match="stratified"):
            estimate_propensity(ds, k_folds=5, cfg=ForestConfig(n_trees=5))

    def test_k_folds_validation(self):
        ds = make_discrete_ds(100, 2, seed=6)
        with pytest.raises(ConfigError):
            estimate_propensity(ds, k_folds=1)

    def test_stored_probs_respect_bounds(self):
        ds = make_discrete_ds(500, 3, seed=7)
        est = estimate_propensity(ds, k_folds=5, cfg=ForestConfig(n_trees=20, seed=8),
                                  clip=(0.05, 1.0))
        assert est.probs.min() >= 0.05
        assert est.probs.max() <= 1.0


class TestOutcomes:
    def test_constant_outcome_everywhere(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(120, 3))
        z = rng.integers(0, 2, 120)
        ds = Dataset(features=X, outcomes=np.full(120, 4.0), treatments=z)
        est = estimate_outcomes(ds, cfg=ForestConfig(n_trees=10, seed=1))
        assert np.all(est.preds == 4.0)

    def test_arm_constants_recovered(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(500, 3))
        z = rng.integers(0, 2, 500)
        y = np.where(z == 1, 5.0, 0.0)
        ds = Dataset(features=X, outcomes=y, treatments=z)
        est = estimate_outcomes(ds, cfg=ForestConfig(n_trees=20, seed=2))
        assert float(np.max(np.abs(est.preds[:, 0] - 0.0))) < 0.1
        assert float(np.max(np.abs(est.preds[:, 1] - 5.0))) < 0.1

    def test_models_trained_on_exactly_their_arm(self):
        from policytrees.forest import fit_regressor

        ds = make_discrete_ds(200, 3, seed=2)
        cfg = ForestConfig(n_trees=15, seed=3)
        est = estimate_outcomes(ds, cfg=cfg)
        arm_seeds = _seed_stream(cfg.seed, 202, 3)
        rows = np.flatnonzero(ds.treatments == 1)
        manual = fit_regressor(ds.features[rows], ds.outcomes[rows],
                               cfg.reseeded(arm_seeds[1]))
        assert np.array_equal(est.preds[:, 1], manual.predict(ds.features))

    def test_small_arm_error_names_the_arm(self):
        X = np.random.default_rng(3).normal(size=(60, 2))
        z = np.r_[np.zeros(55, int), np.ones(5, int)]
        ds = Dataset(features=X, outcomes=np.zeros(60), treatments=z)
        with pytest.raises(InputError, match="arm 1"):
            estimate_outcomes(ds, cfg=ForestConfig(n_trees=5, min_leaf=5))


def _manual_estimates(seed, n=200, T=3):
    rng = np.random.default_rng(seed)
    yhat = rng.normal(size=(n, T))
    phat = rng.uniform(0.02, 1.0, size=(n, T))
    z = rng.integers(0, T, n)
    y = rng.normal(size=n)
    ds = Dataset(features=rng.normal(size=(n, 2)), outcomes=y, treatments=z)
    prop = PropensityEstimate(probs=phat, folds=np.zeros(n, np.int64), clip_bounds=(0.0, 1.0))
    out = OutcomeEstimate(preds=yhat, per_treatment_models=(None,) * T)
    return ds, prop, out


class TestDoublyRobust:
    def test_counterfactual_arms_keep_model_estimate(self):
        ds, prop, out = _manual_estimates(0)
        rm = doubly_robust_rewards(ds, prop, out)
        unobserved = np.ones_like(rm.values, dtype=bool)
        unobserved[np.arange(ds.n), ds.treatments] = False
        assert np.array_equal(rm.values[unobserved], out.preds[unobserved])

    def test_worked_example(self):
        ds = Dataset(features=np.zeros((1, 1)), outcomes=[2.0], treatments=[0])
        prop = PropensityEstimate(probs=np.array([[0.5, 0.5]]),
                                  folds=np.zeros(1, np.int64), clip_bounds=(0.0, 1.0))
        out = OutcomeEstimate(preds=np.array([[1.5, 0.0]]), per_treatment_models=(None, None))
        rm = doubly_robust_rewards(ds, prop, out)
        assert rm.values[0, 0] == (2.0 - 1.5) / 0.5 + 1.5 == 2.5

    def test_unit_propensity_recovers_observed_outcome(self):
        ds, prop, out = _manual_estimates(1)
        probs = prop.probs.copy()
        probs[np.arange(ds.n), ds.treatments] = 1.0
        prop = PropensityEstimate(probs=probs, folds=prop.folds, clip_bounds=(0.0, 1.0))
        rm = doubly_robust_rewards(ds, prop, out)
        assert np.allclose(rm.values[np.arange(ds.n), ds.treatments], ds.outcomes, atol=1e-12)

    def test_perfect_outcome_model_ignores_propensity(self):
        # algebraic identity: yhat = y on the observed arm makes phat cancel
        ds, prop, out = _manual_estimates(2)
        preds = out.preds.copy()
        preds[np.arange(ds.n), ds.treatments] = ds.outcomes
        out = OutcomeEstimate(preds=preds, per_treatment_models=out.per_treatment_models)
        rm = doubly_robust_rewards(ds, prop, out)
        assert np.allclose(rm.values[np.arange(ds.n), ds.treatments], ds.outcomes, atol=1e-12)

    @given(y=st.floats(-50, 50), yhat=st.floats(-50, 50),
           phat=st.floats(0.01, 1.0), observed=st.booleans())
    @settings(max_examples=200, deadline=None)
    def test_formula_property(self, y, yhat, phat, observed):
        ds = Dataset(features=np.zeros((1, 1)), outcomes=[y], treatments=[0 if observed else 1])
        prop = PropensityEstimate(probs=np.array([[phat, 1.0]]),
                                  folds=np.zeros(1, np.int64), clip_bounds=(0.0, 1.0))
        out = OutcomeEstimate(preds=np.array([[yhat, 0.0]]), per_treatment_models=(None, None))
        got = doubly_robust_rewards(ds, prop, out).values[0, 0]
        want = (y - yhat) / phat + yhat if observed else yhat
        assert got == pytest.approx(want, abs=1e-12)

    def test_zero_propensity_rejected(self):
        ds, prop, out = _manual_estimates(3)
        probs = prop.probs.copy()
        probs[0, 0] = 0.0
        prop = PropensityEstimate(probs=probs, folds=prop.folds, clip_bounds=(0.0, 1.0))
        with pytest.raises(InputError):
            doubly_robust_rewards(ds, prop, out)


class TestDoseRewards:
    def test_absolute_distance_argmin_tracks_x1(self):
        # outcome |x1 - dose| has analytic minimizer dose = x1
        rng = np.random.default_rng(0)
        n = 2000
        X = sample_features(n, rng)
        dose = rng.uniform(-4, 4, n)
        y = np.abs(X[:, 0] - dose)
        ds = Dataset(features=X, outcomes=y, treatments=dose[:, None])
        space = TreatmentSpace.continuous([("dose", -4, 4, 10)])
        rm = continuous_dose_rewards(ds, space, ForestConfig(n_trees=100, seed=1))
        grid = np.asarray(space.grids[0])
        best = grid[np.argmin(rm.values, axis=1)]
        target = grid[np.argmin(np.abs(X[:, 0][:, None] - grid[None, :]), axis=1)]
        step = grid[1] - grid[0]
        frac = float(np.mean(np.abs(best - target) <= step + 1e-9))
        assert frac > 0.9

    def test_constant_outcome_constant_rewards(self):
        rng = np.random.default_rng(1)
        X = sample_features(300, rng)
        dose = rng.uniform(-4, 4, 300)
        ds = Dataset(features=X, outcomes=np.full(300, 2.5), treatments=dose[:, None])
        space = TreatmentSpace.continuous([("dose", -4, 4, 10)])
        rm = continuous_dose_rewards(ds, space, ForestConfig(n_trees=20, seed=2))
        assert np.allclose(rm.values, 2.5, atol=1e-9)

    def test_pair_grids_cross_product(self):
        rng = np.random.default_rng(2)
        X = sample_features(120, rng)
        doses = rng.uniform(-4, 4, size=(120, 2))
        ds = Dataset(features=X, outcomes=rng.normal(size=120), treatments=doses)
        space = TreatmentSpace.continuous([("d1", -4, 4, 6), ("d2", -4, 4, 6)])
        rm = continuous_dose_rewards(ds, space, ForestConfig(n_trees=10, seed=3))
        assert rm.n_candidates == 36
        assert len(rm.candidate_labels) == 36

    def test_observed_dose_outside_range_rejected(self):
        rng = np.random.default_rng(3)
        X = sample_features(50, rng)
        dose = np.full(50, 5.0)
        ds = Dataset(features=X, outcomes=np.zeros(50), treatments=dose[:, None])
        space = TreatmentSpace.continuous([("dose", -4, 4, 10)])
        with pytest.raises(InputError, match="outside the declared range"):
            continuous_dose_rewards(ds, space, ForestConfig(n_trees=5))

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError, match="empty"):
            TreatmentSpace.continuous([("dose", -4, 4, np.array([]))])


class TestBinaryOutcomeRewards:
    def test_all_zero_outcomes_give_near_zero_rewards(self):
        rng = np.random.default_rng(0)
        X = sample_features(200, rng)
        dose = rng.uniform(-4, 4, 200)
        ds = Dataset(features=X, outcomes=np.zeros(200), treatments=dose[:, None])
        space = TreatmentSpace.continuous([("dose", -4, 4, 5)])
        rm = binary_outcome_rewards(ds, space, ForestConfig(n_trees=10, seed=1))
        assert np.allclose(rm.values, 0.0, atol=1e-9)

    def test_purchase_probability_orders_with_price(self):
        # event probability rises with price, so reward columns must too
        rng = np.random.default_rng(1)
        n = 3000
        X = sample_features(n, rng)
        price = rng.uniform(-4, 4, n)
        p_event = 1 / (1 + np.exp(-price))
        y = (rng.random(n) < p_event).astype(float)
        ds = Dataset(features=X, outcomes=y, treatments=price[:, None])
        space = TreatmentSpace.continuous([("price", -4, 4, 6)])
        rm = binary_outcome_rewards(ds, space, ForestConfig(n_trees=60, seed=2))
        col_means = rm.values.mean(axis=0)
        assert np.all(np.diff(col_means) > 0)

    def test_rewards_are_probabilities(self):
        rng = np.random.default_rng(2)
        X = sample_features(400, rng)
        z = rng.integers(0, 2, 400)
        y = (rng.random(400) < 0.5).astype(float)
        ds = Dataset(features=X, outcomes=y, treatments=z)
        space = TreatmentSpace.discrete(("a", "b"))
        rm = binary_outcome_rewards(ds, space, ForestConfig(n_trees=20, seed=3))
        assert rm.values.min() >= 0.0 and rm.values.max() <= 1.0

    def test_non_binary_outcomes_rejected(self):
        rng = np.random.default_rng(3)
        X = sample_features(50, rng)
        ds = Dataset(features=X, outcomes=rng.normal(size=50),
                     treatments=rng.uniform(-4, 4, 50)[:, None])
        space = TreatmentSpace.continuous([("dose", -4, 4, 5)])
        with pytest.raises(InputError, match="binary"):
            binary_outcome_rewards(ds, space, ForestConfig(n_trees=5))


class TestPenaltyRewards:
    def test_zero_one_matrix_is_misclassification(self):
        L = PenaltyMatrix(np.ones((3, 3)) - np.eye(3))
        z = np.array([0, 1, 2, 1])
        rm = penalty_rewards(z, L)
        expected = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0], [1, 0, 1]], dtype=float)
        assert np.array_equal(rm.values, expected)

    def test_asymmetric_lookup(self):
        L = PenaltyMatrix(np.array([[0.0, 3.0], [1.0, 0.0]]))
        rm = penalty_rewards(np.array([0]), L)
        assert rm.values.tolist() == [[0.0, 3.0]]

    def test_row_permutation_equivariance(self):
        rng = np.random.default_rng(0)
        L = PenaltyMatrix(rng.uniform(size=(4, 4)))
        z = rng.integers(0, 4, 30)
        perm = rng.permutation(30)
        assert np.array_equal(penalty_rewards(z, L).values[perm],
                              penalty_rewards(z[perm], L).values)

    def test_label_out_of_range_rejected(self):
        L = PenaltyMatrix(np.zeros((2, 2)) + np.eye(2))
        with pytest.raises(InputError, match="row 1"):
            penalty_rewards(np.array([0, 5]), L)


def test_rewards_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rm = RewardMatrix(rng.normal(size=(20, 3)), ("a", "b|x=1", "c"))
    path = tmp_path / "rewards.csv"
    rm.to_csv(path)
    back = RewardMatrix.from_csv(path)
    assert back.candidate_labels == rm.candidate_labels
    assert np.array_equal(back.values, rm.values)


def test_stratified_folds_cover_every_arm():
    z = np.array([0] * 10 + [1] * 7 + [2] * 13)
    folds = stratified_folds(z, 3, seed=0)
    for arm in (0, 1, 2):
        assert set(np.unique(folds[z == arm])) == {0, 1, 2}

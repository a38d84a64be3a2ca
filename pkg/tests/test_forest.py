import numpy as np
import pytest

from policytrees.errors import ConfigError, InputError
from policytrees.forest import ForestConfig, fit_classifier, fit_regressor


def test_constant_target_predicts_exactly():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 3))
    y = np.full(50, 3.0)
    model = fit_regressor(X, y, ForestConfig(n_trees=20, seed=1))
    assert np.all(model.predict(rng.normal(size=(20, 3))) == 3.0)


def test_step_function_learned():
    # oracle is the generating step; evaluate off the training points
    rng = np.random.default_rng(1)
    X = rng.uniform(-2, 2, size=(200, 1))
    y = (X[:, 0] > 0).astype(float)
    model = fit_regressor(X, y, ForestConfig(n_trees=100, seed=2))
    grid = np.linspace(-1.95, 1.95, 101)[:, None]
    mse = float(np.mean((model.predict(grid) - (grid[:, 0] > 0)) ** 2))
    assert mse < 0.01


def test_fixed_seed_fits_identically():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(120, 4))
    y = rng.normal(size=120)
    cfg = ForestConfig(n_trees=30, seed=9)
    grid = rng.normal(size=(40, 4))
    assert np.array_equal(fit_regressor(X, y, cfg).predict(grid),
                          fit_regressor(X, y, cfg).predict(grid))


def test_predictions_stay_in_target_range():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(150, 3))
    y = rng.uniform(5.0, 9.0, size=150)
    model = fit_regressor(X, y, ForestConfig(n_trees=25, seed=0))
    preds = model.predict(rng.normal(size=(200, 3)) * 10)
    assert preds.min() >= y.min() and preds.max() <= y.max()


def test_constant_features_give_stump():
    X = np.ones((30, 2))
    y = np.arange(30, dtype=float)
    model = fit_regressor(X, y, ForestConfig(n_trees=10, bootstrap=False, seed=0))
    preds = model.predict(np.random.default_rng(0).normal(size=(5, 2)))
    assert np.all(preds == preds[0])
    assert preds[0] == pytest.approx(y.mean())


def test_too_few_rows_rejected():
    with pytest.raises(InputError):
        fit_regressor(np.zeros((1, 2)), np.zeros(1), ForestConfig(n_trees=2))


def test_single_class_degenerates_to_certainty():
    X = np.random.default_rng(4).normal(size=(40, 2))
    model = fit_classifier(X, np.zeros(40, dtype=int), ForestConfig(n_trees=10, seed=0))
    proba = model.predict_proba(X)
    assert proba.shape == (40, 1)
    assert np.all(proba == 1.0)


def test_separable_blobs_learned():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(-2, 1, size=(200, 2)), rng.normal(2, 1, size=(200, 2))])
    labels = np.r_[np.zeros(200, int), np.ones(200, int)]
    model = fit_classifier(X, labels, ForestConfig(n_trees=50, seed=1))
    Xte = np.vstack([rng.normal(-2, 1, size=(100, 2)), rng.normal(2, 1, size=(100, 2))])
    yte = np.r_[np.zeros(100, int), np.ones(100, int)]
    acc = float(np.mean(np.argmax(model.predict_proba(Xte), axis=1) == yte))
    assert acc > 0.95


@pytest.mark.parametrize("n_trees", [10, 50])
def test_proba_rows_sum_to_one(n_trees):
    rng = np.random.default_rng(6)
    X = rng.normal(size=(100, 3))
    labels = rng.integers(0, 3, 100)
    model = fit_classifier(X, labels, ForestConfig(n_trees=n_trees, seed=2))
    proba = model.predict_proba(rng.normal(size=(50, 3)))
    assert np.all(proba >= 0)
    assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-9)


def test_declared_classes_fix_column_order():
    X = np.random.default_rng(7).normal(size=(30, 2))
    labels = np.array([2] * 15 + [5] * 15)
    model = fit_classifier(X, labels, ForestConfig(n_trees=5, seed=0), classes=(2, 5, 9))
    proba = model.predict_proba(X)
    assert proba.shape == (30, 3)
    assert np.allclose(proba[:, 2], 0.0)  # class 9 never observed


def test_labels_outside_declared_classes_rejected():
    X = np.zeros((10, 1))
    with pytest.raises(InputError):
        fit_classifier(X, np.arange(10) % 3, ForestConfig(n_trees=2), classes=(0, 1))


def test_empty_input_predicts_empty():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(40, 2))
    reg = fit_regressor(X, rng.normal(size=40), ForestConfig(n_trees=5, seed=0))
    assert reg.predict(np.empty((0, 2))).shape == (0,)
    clf = fit_classifier(X, rng.integers(0, 2, 40), ForestConfig(n_trees=5, seed=0))
    assert clf.predict_proba(np.empty((0, 2))).shape == (0, 2)


def test_duplicated_row_predicts_identically():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(60, 3))
    model = fit_regressor(X, rng.normal(size=60), ForestConfig(n_trees=10, seed=3))
    row = rng.normal(size=3)
    preds = model.predict(np.tile(row, (7, 1)))
    assert np.all(preds == preds[0])


@pytest.mark.parametrize("n_trees", [10, 40])
def test_prediction_is_permutation_equivariant(n_trees):
    rng = np.random.default_rng(10)
    X = rng.normal(size=(80, 3))
    model = fit_regressor(X, rng.normal(size=80), ForestConfig(n_trees=n_trees, seed=4))
    Xq = rng.normal(size=(25, 3))
    perm = rng.permutation(25)
    assert np.array_equal(model.predict(Xq)[perm], model.predict(Xq[perm]))


def test_dimension_mismatch_rejected():
    rng = np.random.default_rng(11)
    model = fit_regressor(rng.normal(size=(30, 3)), rng.normal(size=30),
                          ForestConfig(n_trees=3, seed=0))
    with pytest.raises(InputError):
        model.predict(rng.normal(size=(5, 2)))


def test_oob_score_reported_only_with_bootstrap():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(100, 2))
    y = X[:, 0] * 2.0
    with_bag = fit_regressor(X, y, ForestConfig(n_trees=30, seed=1))
    without = fit_regressor(X, y, ForestConfig(n_trees=30, seed=1, bootstrap=False))
    assert with_bag.oob_score is not None and with_bag.oob_score > 0.5
    assert without.oob_score is None


def test_config_validation():
    with pytest.raises(ConfigError):
        ForestConfig(n_trees=0)
    with pytest.raises(ConfigError):
        ForestConfig(mtry=0)
    with pytest.raises(ConfigError):
        fit_regressor(np.zeros((10, 2)), np.zeros(10), ForestConfig(n_trees=2, mtry=5))

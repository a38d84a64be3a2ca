import csv

import numpy as np
import pytest

from policytrees.bench import DESIGNS, RunRecord, run_experiment
from policytrees.errors import ConfigError
from policytrees.forest import ForestConfig
from policytrees.learner import TuneGrid

SMALL_GRID = TuneGrid(depths=(1, 2), alphas=(0.0, 0.01), restarts=3)
SMALL_FOREST = ForestConfig(n_trees=20)


def small_run(design="binary-1", methods=("optimal-policy",), reps=2, seed=0, **kw):
    return run_experiment(design, methods=methods, n_grid=(120,), repetitions=reps,
                          seed=seed, tune_grid=SMALL_GRID, forest_cfg=SMALL_FOREST,
                          n_test=600, **kw)


def test_design_registry_covers_all_families():
    assert len(DESIGNS) == 15
    assert {d.split("-")[0] for d in DESIGNS} == {"binary", "multi", "dose", "multidose"}


def test_unknown_design_lists_valid_ids():
    with pytest.raises(ConfigError, match="binary-1"):
        run_experiment("binary-99")


def test_unknown_method_rejected():
    with pytest.raises(ConfigError, match="regress-compare"):
        run_experiment("binary-1", methods=("causal-forest",))


def test_same_seed_reproduces_table():
    a = small_run(seed=7)
    b = small_run(seed=7)
    assert a.records == b.records


def test_detail_rows_shape():
    result = small_run(methods=("optimal-policy", "greedy-policy"), reps=3)
    assert len(result.records) == 6
    assert all(isinstance(r, RunRecord) for r in result.records)
    assert all(r.regret >= 0 for r in result.records)


def test_summary_is_mean_of_detail(tmp_path):
    result = small_run(methods=("optimal-policy", "greedy-policy"), reps=3)
    for design, method, n, mean_regret, stderr, reps in result.summary():
        rows = [r.regret for r in result.records if r.method == method and r.n == n]
        assert len(rows) == reps == 3
        assert mean_regret == pytest.approx(np.mean(rows))
    detail = tmp_path / "detail.csv"
    summary = tmp_path / "summary.csv"
    result.write_detail(detail)
    result.write_summary(summary)
    with open(detail, newline="") as fh:
        drows = list(csv.DictReader(fh))
    assert len(drows) == 6
    assert set(drows[0]) == {"design", "method", "n", "repetition", "regret"}
    with open(summary, newline="") as fh:
        srows = list(csv.DictReader(fh))
    by_method = {r["method"]: float(r["mean_regret"]) for r in srows}
    for method in ("optimal-policy", "greedy-policy"):
        got = np.mean([float(r["regret"]) for r in drows if r["method"] == method])
        assert by_method[method] == pytest.approx(got)


def test_single_method_table():
    result = small_run(methods=("regress-compare",), reps=2)
    assert {r.method for r in result.records} == {"regress-compare"}


def test_optimal_dominates_greedy_at_matching_hp():
    # shared degenerate grid pins (depth, alpha), making the dominance exact
    grid = TuneGrid(depths=(2,), alphas=(0.0,), restarts=4)
    result = run_experiment("binary-1", methods=("greedy-policy", "optimal-policy"),
                            n_grid=(150,), repetitions=3, seed=3, tune_grid=grid,
                            forest_cfg=SMALL_FOREST, n_test=500)
    greedy = {(r.n, r.repetition): r.train_objective
              for r in result.records if r.method == "greedy-policy"}
    optimal = {(r.n, r.repetition): r.train_objective
               for r in result.records if r.method == "optimal-policy"}
    for key in greedy:
        assert optimal[key] <= greedy[key] + 1e-9
    assert (np.mean(list(optimal.values()))
            <= np.mean(list(greedy.values())) + 1e-9)


def test_continuous_design_runs():
    result = small_run(design="dose-2", methods=("optimal-policy", "regress-compare"))
    assert len(result.records) == 4
    assert all(np.isfinite(r.regret) for r in result.records)


def test_parallel_jobs_match_serial():
    serial = small_run(seed=11)
    parallel = small_run(seed=11, jobs=2)
    assert serial.records == parallel.records

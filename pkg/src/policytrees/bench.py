"""Method-comparison harness over the synthetic problem families.

Each run generates a training set, estimates rewards, fits the requested
policy methods with validation-tuned hyperparameters, and scores mean
regret on a held-out oracle set. Repetitions use RNG streams derived from
(seed, n, repetition), so tables are reproducible cell by cell.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import RewardMatrix
from .errors import ConfigError, InputError
from .forest import ForestConfig
from .learner import TuneGrid, tune
from .rewards import (dose_rewards_from_model, estimate_discrete_rewards,
                      fit_dose_model)
from .synthetic import (BinaryTreatment, GeneratorSpec, MultiContinuous, MultiDiscrete,
                        SingleContinuous, generate, mean_regret, method_dose_space)
from .tree import policy_objective

DESIGNS = {
    "binary-1": BinaryTreatment("f5", "f2"),
    "binary-2": BinaryTreatment("f4", "f3"),
    "binary-3": BinaryTreatment("f7", "f4"),
    "binary-4": BinaryTreatment("f3", "f5"),
    "binary-5": BinaryTreatment("f1", "f6"),
    "binary-6": BinaryTreatment("f2", "f7"),
    "binary-7": BinaryTreatment("f6", "f8"),
    "multi-1": MultiDiscrete("f7", "f4", "f2"),
    "multi-2": MultiDiscrete("f6", "f2", "f7"),
    "dose-1": SingleContinuous("g1"),
    "dose-2": SingleContinuous("g2"),
    "dose-3": SingleContinuous("g3"),
    "dose-4": SingleContinuous("g4"),
    "multidose-1": MultiContinuous("g1", "g2"),
    "multidose-2": MultiContinuous("g3", "g4"),
}

METHODS = ("greedy-policy", "optimal-policy", "regress-compare")

DEFAULT_N_GRID = (100, 500, 2000, 5000)
DEFAULT_TUNE_GRID = TuneGrid(depths=(1, 2, 3, 4, 5), alphas=(0.0, 1e-3, 1e-2, 1e-1),
                             validation_fraction=0.3, min_leaf=1, restarts=10)


@dataclass(frozen=True)
class RunRecord:
    design: str
    method: str
    n: int
    repetition: int
    regret: float
    train_objective: float


@dataclass
class ExperimentResult:
    design: str
    records: list

    def summary(self) -> list[tuple]:
        """(design, method, n, mean_regret, stderr, repetitions) per cell."""
        cells: dict[tuple, list] = {}
        for rec in self.records:
            cells.setdefault((rec.method, rec.n), []).append(rec.regret)
        out = []
        for (method, n), regrets in sorted(cells.items()):
            arr = np.asarray(regrets)
            stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
            out.append((self.design, method, n, float(arr.mean()), stderr, arr.size))
        return out

    def write_detail(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["design", "method", "n", "repetition", "regret"])
            for rec in self.records:
                writer.writerow([rec.design, rec.method, rec.n, rec.repetition,
                                 repr(rec.regret)])

    def write_summary(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["design", "method", "n", "mean_regret", "stderr", "repetitions"])
            for row in self.summary():
                writer.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4]), row[5]])


def _job_seeds(seed: int, n: int, rep: int) -> tuple[int, int, int]:
    state = np.random.SeedSequence([int(seed), int(n), int(rep)]).generate_state(3, dtype=np.uint32)
    return tuple(int(s & 0x7FFFFFFF) for s in state)


def _run_single(args) -> list[RunRecord]:
    (design, methods, n, rep, seed, tune_grid, forest_cfg, n_test, noise_sd) = args
    family = DESIGNS[design]
    gen_seed, est_seed, tune_seed = _job_seeds(seed, n, rep)
    spec = GeneratorSpec(family=family, n_train=n, noise_sd=noise_sd, seed=gen_seed,
                         n_test=n_test)
    ds, oracle = generate(spec)
    discrete = isinstance(family, (BinaryTreatment, MultiDiscrete))
    cfg = forest_cfg.reseeded(est_seed)
    if discrete:
        n_arms = oracle.outcomes.shape[1]
        rewards, _, outcome_models = estimate_discrete_rewards(
            ds, cfg=cfg, n_treatments=n_arms, candidate_labels=oracle.candidate_labels
        )
        test_matrix = (outcome_models.predict_matrix(oracle.features)
                       if "regress-compare" in methods else None)
    else:
        space = method_dose_space(family)
        dose_model = fit_dose_model(ds, space, cfg)
        rewards_values = dose_rewards_from_model(dose_model, ds.features, space)
        rewards = RewardMatrix(values=rewards_values,
                               candidate_labels=space.candidate_labels())
        test_matrix = (dose_rewards_from_model(dose_model, oracle.features, space)
                       if "regress-compare" in methods else None)
    records = []
    for method in methods:
        if method == "regress-compare":
            prescriptions = np.argmin(test_matrix, axis=1)
            train_pred = (outcome_models.preds if discrete else rewards.values)
            train_obj = float(train_pred[np.arange(ds.n), np.argmin(train_pred, axis=1)].mean())
        else:
            kind = "optimal" if method == "optimal-policy" else "greedy"
            _, tree = tune(rewards, ds.features, grid=tune_grid, seed=tune_seed, method=kind)
            prescriptions = tree.prescribe_batch(oracle.features)
            train_obj = policy_objective(tree, rewards, ds.features)
        records.append(RunRecord(
            design=design, method=method, n=n, repetition=rep,
            regret=mean_regret(prescriptions, oracle), train_objective=train_obj,
        ))
    return records


def run_experiment(design: str, methods=("greedy-policy", "optimal-policy"),
                   n_grid=DEFAULT_N_GRID, repetitions: int = 10, seed: int = 0,
                   tune_grid: TuneGrid = DEFAULT_TUNE_GRID,
                   forest_cfg: ForestConfig = ForestConfig(),
                   n_test: int = 10_000, noise_sd: float = 0.1,
                   jobs: int = 1) -> ExperimentResult:
    """Mean-regret comparison for one design over a grid of training sizes."""
    if design not in DESIGNS:
        raise ConfigError(
            f"unknown design {design!r}; valid designs: {', '.join(sorted(DESIGNS))}"
        )
    methods = tuple(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown methods {unknown}; valid: {', '.join(METHODS)}")
    if not methods:
        raise ConfigError("at least one method is required")
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    if any(n < 10 for n in n_grid):
        raise InputError("training sizes below 10 cannot support estimation folds")
    job_args = [
        (design, methods, int(n), rep, seed, tune_grid, forest_cfg, n_test, noise_sd)
        for n in n_grid
        for rep in range(repetitions)
    ]
    records: list[RunRecord] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for batch in pool.map(_run_single, job_args):
                records.extend(batch)
    else:
        for args in job_args:
            records.extend(_run_single(args))
    return ExperimentResult(design=design, records=records)

"""Tree-structured prescription policies from counterfactual reward estimates.

The pipeline: estimate a complete reward matrix from observational data
(:mod:`policytrees.rewards`), then train an interpretable policy tree
against it (:mod:`policytrees.learner`). :mod:`policytrees.synthetic` and
:mod:`policytrees.bench` provide ground-truth problem generators and a
regret-comparison harness; :mod:`policytrees.cli` exposes everything as a
command-line pipeline.
"""

from .data import Dataset, Hyperparameters, RewardMatrix, TreatmentSpace
from .errors import ConfigError, InputError, InternalError, ParseError, PolicyTreesError
from .forest import ForestConfig, ForestModel, fit_classifier, fit_regressor
from .learner import (TuneGrid, fit_exhaustive, fit_greedy, fit_optimal,
                      leaf_best_treatment, tune)
from .rewards import (OutcomeEstimate, PenaltyMatrix, PropensityEstimate,
                      binary_outcome_rewards, continuous_dose_rewards,
                      doubly_robust_rewards, estimate_discrete_rewards,
                      estimate_outcomes, estimate_propensity, penalty_rewards)
from .synthetic import (BinaryTreatment, GeneratorSpec, MultiContinuous, MultiDiscrete,
                        OracleSet, SingleContinuous, eval_f, eval_g, generate,
                        mean_regret, sample_features, standardize_f)
from .tree import Branch, Leaf, PolicyTree, penalized_objective, policy_objective

__version__ = "0.1.0"

__all__ = [
    "Branch", "BinaryTreatment", "ConfigError", "Dataset", "ForestConfig",
    "ForestModel", "GeneratorSpec", "Hyperparameters", "InputError", "InternalError",
    "Leaf", "MultiContinuous", "MultiDiscrete", "OracleSet", "OutcomeEstimate",
    "ParseError", "PenaltyMatrix", "PolicyTree", "PolicyTreesError", "PropensityEstimate",
    "RewardMatrix", "SingleContinuous", "TreatmentSpace", "TuneGrid",
    "binary_outcome_rewards", "continuous_dose_rewards", "doubly_robust_rewards",
    "estimate_discrete_rewards", "estimate_outcomes", "estimate_propensity",
    "eval_f", "eval_g", "fit_classifier", "fit_exhaustive", "fit_greedy",
    "fit_optimal", "fit_regressor", "generate", "leaf_best_treatment", "mean_regret",
    "penalized_objective", "penalty_rewards", "policy_objective", "sample_features",
    "standardize_f", "tune",
]

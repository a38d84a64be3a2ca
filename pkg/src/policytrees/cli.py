"""Command-line pipeline: estimate-rewards, train, prescribe, show, benchmark.

All commands are deterministic given their flags plus an explicit or
materialized ``--seed`` (the seed used always lands in the report).
Reports are JSON-lines files with no timestamps, so identical inputs
reproduce identical artifacts byte for byte.

Exit codes: 0 success, 2 input/schema error, 3 configuration error,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .bench import DEFAULT_TUNE_GRID, DESIGNS, METHODS, run_experiment
from .data import Dataset, Hyperparameters, RewardMatrix, TreatmentSpace
from .errors import ConfigError, InputError, InternalError, ParseError, PolicyTreesError
from .forest import ForestConfig
from .learner import TuneGrid, fit_greedy, fit_optimal, tune
from .rewards import (PenaltyMatrix, binary_outcome_rewards, continuous_dose_rewards,
                      estimate_discrete_rewards, penalty_rewards)
from .tree import PolicyTree, policy_objective


def _read_table(path, delimiter=","):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh, delimiter=delimiter)
            rows = [row for row in reader if row]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: empty file")
    header, data = rows[0], rows[1:]
    if not data:
        raise ParseError(f"{path}: header but no data rows")
    width = len(header)
    for i, row in enumerate(data, start=2):
        if len(row) != width:
            raise ParseError(f"{path}: line {i} has {len(row)} cells, expected {width}")
    return header, data


def _column(header, data, name, path):
    if name not in header:
        raise ParseError(f"{path}: missing required column {name!r}")
    j = header.index(name)
    return [row[j] for row in data]


def _numeric_column(header, data, name, path) -> np.ndarray:
    raw = _column(header, data, name, path)
    out = np.empty(len(raw))
    for i, cell in enumerate(raw):
        try:
            out[i] = float(cell)
        except ValueError:
            raise ParseError(
                f"{path}: row {i + 1}, column {name!r}: non-numeric cell {cell!r}"
            ) from None
    return out


def _feature_matrix(header, data, names, path) -> np.ndarray:
    return np.column_stack([_numeric_column(header, data, nm, path) for nm in names])


def _materialize_seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint32)[0]) & 0x7FFFFFFF


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _write_report(path, records) -> None:
    if not path:
        return
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, default=_json_default) + "\n")


def _comma_list(text):
    return [s.strip() for s in str(text).split(",") if s.strip()]


def _parse_dose_flag(spec: str):
    parts = spec.split(":")
    if len(parts) not in (3, 4):
        raise ConfigError(
            f"--doses expects name:lo:hi[:gridsize], got {spec!r}"
        )
    name = parts[0]
    try:
        lo, hi = float(parts[1]), float(parts[2])
        size = int(parts[3]) if len(parts) == 4 else TreatmentSpace.DEFAULT_GRID_SIZE
    except ValueError as exc:
        raise ConfigError(f"--doses {spec!r}: {exc}") from None
    return (name, lo, hi, size)


def _forest_config(args, seed) -> ForestConfig:
    return ForestConfig(n_trees=args.trees, min_leaf=args.forest_min_leaf, seed=seed)


# ---------------------------------------------------------------------------
# commands


def cmd_estimate_rewards(args) -> int:
    seed = _materialize_seed(args)
    header, data = _read_table(args.data, args.delimiter)
    feature_names = _comma_list(args.features)
    X = _feature_matrix(header, data, feature_names, args.data)
    report = [{"record": "seed", "seed": seed}, {"record": "command", "command": "estimate-rewards"}]
    if args.doses:
        dose_specs = [_parse_dose_flag(s) for s in args.doses]
        space = TreatmentSpace.continuous(dose_specs)
        doses = _feature_matrix(header, data, [d[0] for d in dose_specs], args.data)
        y = _numeric_column(header, data, args.outcome, args.data)
        if args.maximize:
            y = -y
        ds = Dataset(features=X, outcomes=y, treatments=doses, feature_names=feature_names)
        cfg = _forest_config(args, seed)
        if args.mode == "binary":
            rewards = binary_outcome_rewards(ds, space, cfg)
        else:
            rewards = continuous_dose_rewards(ds, space, cfg)
        report.append({"record": "dose_space",
                       "treatments": list(space.labels),
                       "grid_sizes": [len(g) for g in space.grids],
                       "n_candidates": space.n_candidates})
    elif args.mode == "penalty":
        if not args.penalty_matrix:
            raise ConfigError("--mode penalty requires --penalty-matrix")
        pheader, pdata = _read_table(args.penalty_matrix, args.delimiter)
        L = np.array([[float(c) for c in row] for row in pdata])
        penalties = PenaltyMatrix(values=L, class_labels=tuple(pheader))
        raw = _column(header, data, args.treatment, args.data)
        labels = list(pheader)
        index = {lab: k for k, lab in enumerate(labels)}
        bad = [v for v in raw if v not in index]
        if bad:
            raise ParseError(
                f"{args.data}: treatment value {bad[0]!r} is not a class of the penalty matrix"
            )
        z = np.array([index[v] for v in raw], dtype=np.int64)
        rewards = penalty_rewards(z, penalties, candidate_labels=tuple(labels))
        report.append({"record": "penalty_classes", "classes": labels})
    else:
        raw = _column(header, data, args.treatment, args.data)
        labels = _comma_list(args.treatments) if args.treatments else sorted(set(raw))
        index = {lab: k for k, lab in enumerate(labels)}
        bad = [v for v in raw if v not in index]
        if bad:
            raise ParseError(
                f"{args.data}: treatment value {bad[0]!r} is not among the declared labels "
                f"{labels}"
            )
        if len(labels) < 2:
            raise ConfigError("need at least 2 treatment labels")
        z = np.array([index[v] for v in raw], dtype=np.int64)
        y = _numeric_column(header, data, args.outcome, args.data)
        if args.maximize:
            y = -y
        ds = Dataset(features=X, outcomes=y, treatments=z, feature_names=feature_names)
        cfg = _forest_config(args, seed)
        arm_sizes = np.bincount(z, minlength=len(labels)).tolist()
        if args.mode == "binary":
            space = TreatmentSpace.discrete(labels)
            rewards = binary_outcome_rewards(ds, space, cfg)
            report.append({"record": "arm_sizes", "labels": labels, "sizes": arm_sizes})
        else:
            rewards, prop, _ = estimate_discrete_rewards(
                ds, k_folds=args.folds, cfg=cfg, clip=(args.clip, 1.0),
                n_treatments=len(labels), candidate_labels=tuple(labels),
            )
            clipped = int(np.sum(prop.probs <= prop.clip_bounds[0] + 1e-12))
            report.extend([
                {"record": "propensity_folds", "k_folds": args.folds,
                 "fold_sizes": np.bincount(prop.folds).tolist()},
                {"record": "clipping", "clip_lo": prop.clip_bounds[0],
                 "entries_at_floor": clipped},
                {"record": "arm_sizes", "labels": labels, "sizes": arm_sizes},
            ])
    rewards.to_csv(args.out)
    report.append({"record": "rewards", "rows": rewards.n, "columns": rewards.n_candidates,
                   "out": str(args.out)})
    _write_report(args.report, report)
    return 0


def cmd_train(args) -> int:
    seed = _materialize_seed(args)
    rewards = RewardMatrix.from_csv(args.rewards)
    header, data = _read_table(args.data, args.delimiter)
    feature_names = _comma_list(args.features)
    X = _feature_matrix(header, data, feature_names, args.data)
    if X.shape[0] != rewards.n:
        raise InputError(
            f"{args.data} has {X.shape[0]} rows but {args.rewards} has {rewards.n}"
        )
    report = [{"record": "seed", "seed": seed}, {"record": "command", "command": "train"}]
    trace: list = []
    if args.tune:
        grid = TuneGrid(
            depths=tuple(int(d) for d in _comma_list(args.depths)),
            alphas=tuple(float(a) for a in _comma_list(args.alphas)),
            validation_fraction=args.val_fraction,
            min_leaf=args.min_leaf,
            restarts=args.restarts,
        )
        hp, tree = tune(rewards, X, grid=grid, seed=seed, method=args.method,
                        feature_names=feature_names)
        report.append({"record": "tuned", "max_depth": hp.max_depth, "alpha": hp.alpha})
    else:
        hp = Hyperparameters(max_depth=args.depth, alpha=args.alpha,
                             min_leaf=args.min_leaf, restarts=args.restarts, seed=seed)
        if args.method == "greedy":
            tree = fit_greedy(rewards, X, hp, feature_names=feature_names)
        else:
            tree = fit_optimal(rewards, X, hp, feature_names=feature_names, trace=trace)
    with open(args.out, "w") as fh:
        fh.write(tree.to_json() + "\n")
    report.append({"record": "tree", "out": str(args.out), "method": args.method,
                   "objective_train": tree.objective_train,
                   "mean_reward_train": policy_objective(tree, rewards, X),
                   "depth": tree.depth(), "n_leaves": tree.n_leaves})
    for rec in trace:
        report.append({"record": "restart", **rec})
    _write_report(args.report, report)
    return 0


def _load_tree(path) -> PolicyTree:
    try:
        with open(path) as fh:
            return PolicyTree.from_json(fh.read())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def cmd_prescribe(args) -> int:
    tree = _load_tree(args.tree)
    header, data = _read_table(args.data, args.delimiter)
    names = tree.feature_names or tuple(f"x{j + 1}" for j in range(tree.n_features))
    missing = [nm for nm in names if nm not in header]
    if missing:
        raise ParseError(
            f"{args.data}: missing feature columns required by the tree: {missing}"
        )
    X = _feature_matrix(header, data, names, args.data)
    labels = tree.treatment_labels or tuple(str(t) for t in range(tree.n_treatments))
    prescriptions = tree.prescribe_batch(X)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prescription", "path"] if args.explain else ["prescription"])
        for i in range(X.shape[0]):
            row = [labels[prescriptions[i]]]
            if args.explain:
                steps = [
                    f"{names[f]}<{thr:g}" if went_left else f"{names[f]}>={thr:g}"
                    for f, thr, went_left in tree.decision_path(X[i])
                ]
                row.append(";".join(steps) if steps else "(root)")
            writer.writerow(row)
    return 0


def cmd_show(args) -> int:
    tree = _load_tree(args.tree)
    print(tree.render())
    return 0


def cmd_benchmark(args) -> int:
    seed = _materialize_seed(args)
    methods = tuple(_comma_list(args.methods))
    grid = TuneGrid(
        depths=tuple(int(d) for d in _comma_list(args.depths)),
        alphas=tuple(float(a) for a in _comma_list(args.alphas)),
        validation_fraction=args.val_fraction,
        min_leaf=args.min_leaf,
        restarts=args.restarts,
    )
    result = run_experiment(
        args.design,
        methods=methods,
        n_grid=tuple(int(n) for n in _comma_list(args.n)),
        repetitions=args.reps,
        seed=seed,
        tune_grid=grid,
        forest_cfg=ForestConfig(n_trees=args.trees, min_leaf=args.forest_min_leaf, seed=seed),
        n_test=args.test_n,
        jobs=args.jobs,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    detail = os.path.join(args.out_dir, f"{args.design}_detail.csv")
    summary = os.path.join(args.out_dir, f"{args.design}_summary.csv")
    result.write_detail(detail)
    result.write_summary(summary)
    _write_report(args.report, [
        {"record": "seed", "seed": seed},
        {"record": "command", "command": "benchmark"},
        {"record": "tables", "detail": detail, "summary": summary},
    ])
    for row in result.summary():
        print(f"{row[0]} {row[1]} n={row[2]}: regret {row[3]:.4f} +/- {row[4]:.4f} ({row[5]} reps)")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=None, help="RNG seed (materialized if omitted)")
    sub.add_argument("--report", default=None, help="JSONL report path")
    sub.add_argument("--delimiter", default=",", help="input table delimiter")
    sub.add_argument("--config", default=None, help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="policytrees",
        description="Learn and apply tree-structured prescription policies.",
    )
    parser.add_argument("--config", default=None,
                        help="JSON file whose keys mirror the flags of the subcommand")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate-rewards", help="turn observational data into a reward table")
    est.add_argument("--data", required=True)
    est.add_argument("--features", required=True, help="comma-separated feature columns")
    est.add_argument("--outcome", default="outcome")
    est.add_argument("--treatment", default=None, help="discrete treatment column")
    est.add_argument("--treatments", default=None, help="declared labels (default: observed)")
    est.add_argument("--doses", action="append", default=None,
                     help="continuous treatment as name:lo:hi[:gridsize]; repeatable")
    est.add_argument("--mode", choices=("dr", "dose", "binary", "penalty"), default=None,
                     help="estimator (default: dr for --treatment, dose for --doses)")
    est.add_argument("--penalty-matrix", default=None, help="K x K penalty table (header = classes)")
    est.add_argument("--folds", type=int, default=5)
    est.add_argument("--clip", type=float, default=0.01, help="propensity floor")
    est.add_argument("--trees", type=int, default=100)
    est.add_argument("--forest-min-leaf", type=int, default=5)
    est.add_argument("--maximize", action="store_true",
                     help="negate outcomes so higher observed outcome is better")
    est.add_argument("--out", required=True)
    _add_common(est)
    est.set_defaults(func=cmd_estimate_rewards)

    tr = sub.add_parser("train", help="fit a policy tree against a reward table")
    tr.add_argument("--rewards", required=True)
    tr.add_argument("--data", required=True)
    tr.add_argument("--features", required=True)
    tr.add_argument("--method", choices=("optimal", "greedy"), default="optimal")
    tr.add_argument("--depth", type=int, default=3)
    tr.add_argument("--alpha", type=float, default=0.0)
    tr.add_argument("--min-leaf", type=int, default=1)
    tr.add_argument("--restarts", type=int, default=100)
    tr.add_argument("--tune", action="store_true", help="validation-tune depth and alpha")
    tr.add_argument("--depths", default="1,2,3,4,5")
    tr.add_argument("--alphas", default="0.0,0.0001,0.001,0.01,0.1,1.0")
    tr.add_argument("--val-fraction", type=float, default=0.3)
    tr.add_argument("--out", required=True)
    _add_common(tr)
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("prescribe", help="apply a tree document to new rows")
    pr.add_argument("--tree", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--explain", action="store_true", help="add the root-to-leaf split path")
    pr.add_argument("--out", required=True)
    _add_common(pr)
    pr.set_defaults(func=cmd_prescribe)

    sh = sub.add_parser("show", help="render a tree document as text")
    sh.add_argument("--tree", required=True)
    _add_common(sh)
    sh.set_defaults(func=cmd_show)

    bm = sub.add_parser("benchmark", help="run a synthetic method comparison")
    bm.add_argument("--design", required=True,
                    help=f"one of: {', '.join(sorted(DESIGNS))}")
    bm.add_argument("--n", default="100,500,2000,5000", help="comma-separated training sizes")
    bm.add_argument("--reps", type=int, default=10)
    bm.add_argument("--methods", default="greedy-policy,optimal-policy",
                    help=f"subset of: {', '.join(METHODS)}")
    bm.add_argument("--test-n", type=int, default=10_000)
    bm.add_argument("--trees", type=int, default=100)
    bm.add_argument("--forest-min-leaf", type=int, default=5)
    bm.add_argument("--depths", default="1,2,3,4,5")
    bm.add_argument("--alphas", default="0.0,0.001,0.01,0.1")
    bm.add_argument("--restarts", type=int, default=DEFAULT_TUNE_GRID.restarts)
    bm.add_argument("--min-leaf", type=int, default=1)
    bm.add_argument("--val-fraction", type=float, default=0.3)
    bm.add_argument("--jobs", type=int, default=1)
    bm.add_argument("--out-dir", required=True)
    _add_common(bm)
    bm.set_defaults(func=cmd_benchmark)
    return parser


def _push_defaults(parser, defaults) -> None:
    # subcommands parse into a fresh namespace, so the defaults must reach
    # every subparser, and config-supplied values satisfy required flags
    parser.set_defaults(**defaults)
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                _push_defaults(sub, defaults)
        elif action.dest in defaults:
            action.required = False


def _apply_config_file(parser, argv):
    """--config supplies defaults; explicit flags still win."""
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise ConfigError("--config requires a path")
    path = argv[at + 1]
    try:
        with open(path) as fh:
            loaded = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(loaded, dict):
        raise ConfigError(f"config {path} must be a JSON object of flag values")
    defaults = {key.replace("-", "_"): value for key, value in loaded.items()}
    _push_defaults(parser, defaults)
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        if getattr(args, "command", None) == "estimate-rewards":
            if args.mode is None:
                args.mode = "dose" if args.doses else "dr"
            if args.mode == "dose" and not args.doses:
                raise ConfigError("--mode dose requires at least one --doses declaration")
            if args.mode in ("dr", "penalty"):
                if args.doses:
                    raise ConfigError(
                        f"--mode {args.mode} applies to discrete treatments; drop --doses"
                    )
                if not args.treatment:
                    raise ConfigError(f"--mode {args.mode} needs --treatment")
            if args.mode == "binary" and not (args.doses or args.treatment):
                raise ConfigError("--mode binary needs --treatment or --doses")
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4
    except PolicyTreesError as exc:  # pragma: no cover - catch-all
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())

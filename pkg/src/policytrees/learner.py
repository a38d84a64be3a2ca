"""Training policy trees against a reward matrix.

Three fitting routes with one shared objective, the penalized mean reward
(1/n) * sum_i values[i, tau(x_i)] + alpha * (#branch nodes):

* :func:`fit_greedy` -- top-down induction, splitting while the children's
  best-treatment cost strictly improves on the parent's;
* :func:`fit_optimal` -- restarted local search over single-node edits
  (replace a split / collapse a subtree / expand a leaf), each scored
  exactly by re-solving every affected leaf's best treatment;
* :func:`fit_exhaustive` -- full enumeration for small instances, used as
  the correctness oracle for the other two.

Split candidates everywhere are midpoints between consecutive distinct
values of a feature, computed per node on the node's own rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import Hyperparameters, RewardMatrix, as_float_matrix
from .errors import ConfigError, InputError, InternalError
from .tree import Branch, Leaf, PolicyTree

EXHAUSTIVE_CANDIDATE_LIMIT = 10_000


def leaf_best_treatment(row_indices, rewards: RewardMatrix) -> tuple[int, float]:
    """Best single treatment for a set of rows: argmin_t of the column sums.

    Ties break toward the lowest treatment index. Returns (treatment, cost).
    """
    rows = np.asarray(row_indices, dtype=np.int64)
    if rows.size == 0:
        raise InternalError("leaf_best_treatment called with an empty row set")
    sums = rewards.values[rows].sum(axis=0)
    t = int(np.argmin(sums))
    return t, float(sums[t])


# ---------------------------------------------------------------------------
# mutable search tree


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "rows", "treatment",
                 "col_sums", "cost", "depth", "dead")

    def __init__(self, rows, depth):
        self.feature = -1
        self.threshold = 0.0
        self.left = None
        self.right = None
        self.rows = rows
        self.treatment = -1
        self.col_sums = None
        self.cost = np.inf
        self.depth = depth
        self.dead = False

    @property
    def is_leaf(self):
        return self.feature < 0


def _make_leaf(G, rows, depth) -> _Node:
    node = _Node(rows, depth)
    sums = G[rows].sum(axis=0)
    node.treatment = int(np.argmin(sums))
    node.col_sums = sums
    node.cost = float(sums[node.treatment])
    return node


def _solve_as_leaf(node, G):
    sums = G[node.rows].sum(axis=0)
    t = int(np.argmin(sums))
    return t, float(sums[t]), sums


def _clone(node: _Node) -> _Node:
    out = _Node(node.rows, node.depth)
    out.feature = node.feature
    out.threshold = node.threshold
    out.treatment = node.treatment
    out.col_sums = node.col_sums
    out.cost = node.cost
    if not node.is_leaf:
        out.left = _clone(node.left)
        out.right = _clone(node.right)
    return out


def _walk(node: _Node):
    yield node
    if not node.is_leaf:
        yield from _walk(node.left)
        yield from _walk(node.right)


def _subtree_leaf_cost(node: _Node) -> float:
    return sum(nd.cost for nd in _walk(node) if nd.is_leaf)


def _subtree_branches(node: _Node) -> int:
    return sum(1 for nd in _walk(node) if not nd.is_leaf)


def _split_leafcase(X, G, rows, min_leaf):
    """Best plain two-leaf split of a row set (shared by greedy/expand/exhaustive)."""
    Xn = np.ascontiguousarray(X[rows])
    Gn = np.ascontiguousarray(G[rows])
    zeros = np.zeros(rows.size, np.int64)
    return _kernels.best_split_scan(Xn, Gn, zeros, zeros, 1, 1, min_leaf)


def _subtree_arrays(node: _Node):
    """Arena view of a subtree plus leaf-ordinal lookup, for batch routing."""
    feats, thrs, lefts, rights, leaf_ord = [], [], [], [], []
    counter = [0]

    def add(nd):
        i = len(feats)
        feats.append(nd.feature)
        thrs.append(nd.threshold)
        lefts.append(-1)
        rights.append(-1)
        leaf_ord.append(-1)
        if nd.is_leaf:
            leaf_ord[i] = counter[0]
            counter[0] += 1
        else:
            lefts[i] = add(nd.left)
            rights[i] = add(nd.right)
        return i

    add(node)
    return (
        np.asarray(feats, np.int64),
        np.asarray(thrs, np.float64),
        np.asarray(lefts, np.int64),
        np.asarray(rights, np.int64),
        np.asarray(leaf_ord, np.int64),
        counter[0],
    )


def _leaf_assignment(node: _Node, Xn):
    """Ordinal subtree leaf each row of Xn would reach; returns (ordinals, n_leaves)."""
    feats, thrs, lefts, rights, leaf_ord, n_leaves = _subtree_arrays(node)
    if feats.shape[0] == 1:
        return np.zeros(Xn.shape[0], np.int64), 1
    ids = _kernels.route_to_leaf(Xn, feats, thrs, lefts, rights)
    return leaf_ord[ids], n_leaves


def _reassign(node: _Node, G, X):
    """Re-partition a subtree's rows through its fixed structure, re-solving leaves."""
    if node.is_leaf:
        node.treatment, node.cost, node.col_sums = _solve_as_leaf(node, G)
        return
    mask = X[node.rows, node.feature] < node.threshold
    node.left.rows = node.rows[mask]
    node.right.rows = node.rows[~mask]
    _reassign(node.left, G, X)
    _reassign(node.right, G, X)


class SearchState:
    """One local-search trajectory: the current tree plus per-leaf reward caches.

    Leaf contributions are independent, so each leaf caches its reward
    column sums and best-treatment cost; the objective is their total plus
    the per-branch penalty.
    """

    def __init__(self, root: _Node, X, G, alpha, max_depth, min_leaf, accept_tol=None):
        self.root = root
        self.X = X
        self.G = G
        self.n = X.shape[0]
        self.alpha_sum = alpha * self.n
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        # strict-improvement margin: the scan maintains split costs
        # incrementally, so demanding a decrease beyond accumulation noise
        # keeps the descent monotone in exact terms (no move churn)
        if accept_tol is None:
            accept_tol = 1e-9 * (1.0 + float(np.abs(G).max()))
        self.accept_tol = accept_tol

    def nodes(self) -> list:
        return list(_walk(self.root))

    def objective_sum(self) -> float:
        return _subtree_leaf_cost(self.root) + self.alpha_sum * _subtree_branches(self.root)

    def objective_mean(self) -> float:
        return self.objective_sum() / self.n

    def check_consistency(self) -> None:
        """Verify cached rows/sums against a from-scratch recomputation."""
        seen = []
        for nd in _walk(self.root):
            if not nd.is_leaf:
                mask = self.X[nd.rows, nd.feature] < nd.threshold
                if not np.array_equal(np.sort(nd.left.rows), np.sort(nd.rows[mask])):
                    raise InternalError("cached left-child rows disagree with the split")
                if not np.array_equal(np.sort(nd.right.rows), np.sort(nd.rows[~mask])):
                    raise InternalError("cached right-child rows disagree with the split")
                continue
            seen.extend(nd.rows.tolist())
            sums = self.G[nd.rows].sum(axis=0)
            if not np.allclose(sums, nd.col_sums, atol=1e-9):
                raise InternalError("cached leaf column sums drifted from recomputation")
            if not np.isclose(nd.cost, sums.min(), atol=1e-9):
                raise InternalError("cached leaf cost drifted from recomputation")
        if sorted(seen) != list(range(self.n)):
            raise InternalError("leaf row sets do not partition the observations")

    # -- moves ----------------------------------------------------------

    def improve_node(self, node: _Node) -> bool:
        """Evaluate replace/collapse/expand at one node; apply the best strict improvement."""
        G, X = self.G, self.X
        best_delta = -self.accept_tol
        best_move = None
        if node.is_leaf:
            if node.depth < self.max_depth and node.rows.size >= 2 * self.min_leaf:
                f, thr, cost = _split_leafcase(X, G, node.rows, self.min_leaf)
                if f >= 0:
                    delta = cost + self.alpha_sum - node.cost
                    if delta < best_delta:
                        best_delta = delta
                        best_move = ("expand", f, thr)
        else:
            t, cost, sums = _solve_as_leaf(node, G)
            current = _subtree_leaf_cost(node)
            delta = cost - current - self.alpha_sum * _subtree_branches(node)
            if delta < best_delta:
                best_delta = delta
                best_move = ("collapse", t, cost, sums)
            Xn = np.ascontiguousarray(X[node.rows])
            Gn = np.ascontiguousarray(G[node.rows])
            a_left, n_left = _leaf_assignment(node.left, Xn)
            a_right, n_right = _leaf_assignment(node.right, Xn)
            f, thr, cost2 = _kernels.best_split_scan(
                Xn, Gn, a_left, a_right, n_left, n_right, self.min_leaf
            )
            if f >= 0:
                delta = cost2 - current
                if delta < best_delta:
                    best_delta = delta
                    best_move = ("replace", f, thr)
        if best_move is None:
            return False
        self._apply(node, best_move)
        return True

    def _apply(self, node: _Node, move) -> None:
        kind = move[0]
        if kind == "expand":
            _, f, thr = move
            mask = self.X[node.rows, f] < thr
            node.feature = f
            node.threshold = thr
            node.left = _make_leaf(self.G, node.rows[mask], node.depth + 1)
            node.right = _make_leaf(self.G, node.rows[~mask], node.depth + 1)
            node.treatment = -1
            node.col_sums = None
            node.cost = np.inf
        elif kind == "collapse":
            _, t, cost, sums = move
            for nd in _walk(node):
                if nd is not node:
                    nd.dead = True
            node.feature = -1
            node.left = None
            node.right = None
            node.treatment = t
            node.cost = cost
            node.col_sums = sums
        else:  # replace
            _, f, thr = move
            node.feature = f
            node.threshold = thr
            _reassign(node, self.G, self.X)


# ---------------------------------------------------------------------------
# fitting routes


def _validate_training(rewards: RewardMatrix, features, hp: Hyperparameters):
    X = np.ascontiguousarray(as_float_matrix(features, "features"))
    if X.shape[0] != rewards.n:
        raise InputError(
            f"features have {X.shape[0]} rows but rewards have {rewards.n}"
        )
    if X.shape[0] < hp.min_leaf:
        raise InputError(
            f"{X.shape[0]} rows cannot satisfy min_leaf={hp.min_leaf}"
        )
    return X, np.ascontiguousarray(rewards.values)


def _to_policy_tree(root: _Node, rewards, hp, n, n_features, feature_names) -> PolicyTree:
    nodes: list = []

    def emit(nd):
        slot = len(nodes)
        nodes.append(None)
        if nd.is_leaf:
            nodes[slot] = Leaf(treatment=int(nd.treatment), n_train=int(nd.rows.size))
        else:
            left = emit(nd.left)
            right = emit(nd.right)
            nodes[slot] = Branch(
                feature=int(nd.feature), threshold=float(nd.threshold), left=left, right=right
            )
        return slot

    emit(root)
    objective = _subtree_leaf_cost(root) / n + hp.alpha * _subtree_branches(root)
    return PolicyTree(
        nodes=tuple(nodes),
        n_features=n_features,
        n_treatments=rewards.n_candidates,
        feature_names=feature_names,
        treatment_labels=rewards.candidate_labels,
        hyperparams=hp,
        objective_train=float(objective),
    )


def _grow_greedy(X, G, max_depth, min_leaf) -> _Node:
    rows = np.arange(X.shape[0], dtype=np.int64)
    return _grow_greedy_below(X, G, rows, 0, max_depth, min_leaf)


def fit_greedy(rewards: RewardMatrix, features, hp: Hyperparameters,
               feature_names=None) -> PolicyTree:
    """Top-down induction: recurse while the best split strictly improves.

    The complexity penalty ``hp.alpha`` is ignored during growth (greedy
    trees are depth-capped only) but is included in the reported
    ``objective_train`` so trees are comparable across methods.
    """
    X, G = _validate_training(rewards, features, hp)
    root = _grow_greedy(X, G, hp.max_depth, hp.min_leaf)
    return _to_policy_tree(root, rewards, hp, X.shape[0], X.shape[1], feature_names)


def _random_tree(X, G, rng, max_depth, min_leaf) -> _Node:
    p = X.shape[1]

    def grow(rows, depth):
        node = _make_leaf(G, rows, depth)
        if depth >= max_depth or rows.size < 2 * min_leaf:
            return node
        for j in rng.permutation(p):
            xs = np.sort(X[rows, j])
            lo = min_leaf - 1
            hi = rows.size - min_leaf
            positions = np.nonzero(xs[lo:hi] < xs[lo + 1:hi + 1])[0] + lo
            if positions.size == 0:
                continue
            k = int(positions[rng.integers(positions.size)])
            thr = 0.5 * (xs[k] + xs[k + 1])
            mask = X[rows, j] < thr
            node.feature = int(j)
            node.threshold = thr
            node.left = grow(rows[mask], depth + 1)
            node.right = grow(rows[~mask], depth + 1)
            return node
        return node

    return grow(np.arange(X.shape[0], dtype=np.int64), 0)


def _root_candidates(X, min_leaf, rng) -> list:
    """Every valid root split, in random order."""
    n = X.shape[0]
    out = []
    for j in range(X.shape[1]):
        xs = np.sort(X[:, j])
        lo, hi = min_leaf - 1, n - min_leaf
        positions = np.nonzero(xs[lo:hi] < xs[lo + 1:hi + 1])[0] + lo
        for k in positions:
            out.append((int(j), 0.5 * (xs[k] + xs[k + 1])))
    return [out[i] for i in rng.permutation(len(out))]


def _grow_greedy_below(X, G, rows, depth, max_depth, min_leaf) -> _Node:
    node = _make_leaf(G, rows, depth)
    if depth >= max_depth or rows.size < 2 * min_leaf:
        return node
    f, thr, cost = _split_leafcase(X, G, rows, min_leaf)
    if f < 0 or not cost < node.cost:
        return node
    mask = X[rows, f] < thr
    node.feature = int(f)
    node.threshold = float(thr)
    node.left = _grow_greedy_below(X, G, rows[mask], depth + 1, max_depth, min_leaf)
    node.right = _grow_greedy_below(X, G, rows[~mask], depth + 1, max_depth, min_leaf)
    return node


def _rooted_init(X, G, j, thr, max_depth, min_leaf) -> _Node:
    """Tree pinned to one root split with greedy-grown subtrees."""
    rows = np.arange(X.shape[0], dtype=np.int64)
    root = _make_leaf(G, rows, 0)
    mask = X[:, j] < thr
    root.feature = j
    root.threshold = thr
    root.left = _grow_greedy_below(X, G, rows[mask], 1, max_depth, min_leaf)
    root.right = _grow_greedy_below(X, G, rows[~mask], 1, max_depth, min_leaf)
    return root


def fit_optimal(rewards: RewardMatrix, features, hp: Hyperparameters,
                feature_names=None, trace=None) -> PolicyTree:
    """Restarted coordinate descent over single-node edits.

    Restart 0 descends from the greedy tree, guaranteeing the result is
    never worse than :func:`fit_greedy`. Later restarts walk a shuffled
    queue of root-split candidates (each completed with greedy subtrees;
    when the queue is small enough to cover fully, a few candidates are
    constructed per restart and the best one kept), then fall back to
    uniformly random trees once the queue is exhausted. Each restart
    sweeps the nodes in random order applying strict improvements until a
    full sweep changes nothing; the best tree over restarts wins.
    Deterministic given ``hp.seed``.

    ``trace``, when given a list, receives one record per restart with the
    accepted-objective trajectory (mean units).
    """
    X, G = _validate_training(rewards, features, hp)
    rng = np.random.default_rng(hp.seed)
    accept_tol = 1e-9 * (1.0 + float(np.abs(G).max()))
    alpha_sum = hp.alpha * X.shape[0]
    greedy_root = _grow_greedy(X, G, hp.max_depth, hp.min_leaf)
    queue = _root_candidates(X, hp.min_leaf, rng) if hp.max_depth > 0 else []
    # construct several rooted inits per restart only when that lets the
    # restart budget cover every root candidate at least once
    per_restart = 1
    if hp.restarts > 1 and 0 < len(queue) <= 6 * (hp.restarts - 1):
        per_restart = -(-len(queue) // (hp.restarts - 1))
    best_obj = np.inf
    best_root = None
    for r in range(hp.restarts):
        if r == 0:
            root, init = _clone(greedy_root), "greedy"
        elif queue:
            init = "rooted"
            root, root_obj = None, np.inf
            for _ in range(per_restart):
                if not queue:
                    break
                j, thr = queue.pop()
                cand = _rooted_init(X, G, j, thr, hp.max_depth, hp.min_leaf)
                obj = _subtree_leaf_cost(cand) + alpha_sum * _subtree_branches(cand)
                if obj < root_obj:
                    root, root_obj = cand, obj
        else:
            root, init = _random_tree(X, G, rng, hp.max_depth, hp.min_leaf), "random"
        state = SearchState(root, X, G, hp.alpha, hp.max_depth, hp.min_leaf, accept_tol)
        trajectory = [state.objective_sum()]
        changed = True
        while changed:
            changed = False
            nodes = state.nodes()
            for k in rng.permutation(len(nodes)):
                node = nodes[k]
                if node.dead:
                    continue
                if state.improve_node(node):
                    trajectory.append(state.objective_sum())
                    changed = True
        obj = trajectory[-1]
        if trace is not None:
            trace.append({
                "restart": r,
                "init": init,
                "objective": [v / state.n for v in trajectory],
            })
        if obj < best_obj:
            best_obj = obj
            best_root = state.root
    return _to_policy_tree(best_root, rewards, hp, X.shape[0], X.shape[1], feature_names)


def fit_exhaustive(rewards: RewardMatrix, features, hp: Hyperparameters,
                   feature_names=None) -> PolicyTree:
    """Enumerate every tree shape up to depth 2 over midpoint thresholds.

    Small-instance oracle: refuses when max_depth > 2 or the root-level
    candidate-split count exceeds ``EXHAUSTIVE_CANDIDATE_LIMIT``.
    """
    X, G = _validate_training(rewards, features, hp)
    if hp.max_depth > 2:
        raise ConfigError("fit_exhaustive only supports max_depth <= 2")
    n, p = X.shape
    n_candidates = sum(len(np.unique(X[:, j])) - 1 for j in range(p))
    if n_candidates > EXHAUSTIVE_CANDIDATE_LIMIT:
        raise ConfigError(
            f"instance too large for exhaustive search: {n_candidates} candidate splits "
            f"(limit {EXHAUSTIVE_CANDIDATE_LIMIT})"
        )
    alpha_sum = hp.alpha * n
    min_leaf = hp.min_leaf

    def solve(rows, depth_left, depth):
        node = _make_leaf(G, rows, depth)
        best_cost, best_node = node.cost, node
        if depth_left == 0 or rows.size < 2 * min_leaf:
            return best_cost, best_node
        if depth_left == 1:
            f, thr, cost = _split_leafcase(X, G, rows, min_leaf)
            if f >= 0 and cost + alpha_sum < best_cost:
                mask = X[rows, f] < thr
                branch = _Node(rows, depth)
                branch.feature = int(f)
                branch.threshold = float(thr)
                branch.left = _make_leaf(G, rows[mask], depth + 1)
                branch.right = _make_leaf(G, rows[~mask], depth + 1)
                return cost + alpha_sum, branch
            return best_cost, best_node
        for j in range(p):
            xs_order = np.argsort(X[rows, j], kind="stable")
            xs = X[rows, j][xs_order]
            lo = min_leaf - 1
            hi = rows.size - min_leaf
            positions = np.nonzero(xs[lo:hi] < xs[lo + 1:hi + 1])[0] + lo
            for k in positions:
                thr = 0.5 * (xs[k] + xs[k + 1])
                left_rows = rows[xs_order[: k + 1]]
                right_rows = rows[xs_order[k + 1:]]
                cl, nl = solve(left_rows, depth_left - 1, depth + 1)
                cr, nr = solve(right_rows, depth_left - 1, depth + 1)
                total = cl + cr + alpha_sum
                if total < best_cost:
                    best_cost = total
                    branch = _Node(rows, depth)
                    branch.feature = int(j)
                    branch.threshold = float(thr)
                    branch.left = nl
                    branch.right = nr
                    best_node = branch
        return best_cost, best_node

    _, root = solve(np.arange(n, dtype=np.int64), hp.max_depth, 0)
    return _to_policy_tree(root, rewards, hp, n, p, feature_names)


# ---------------------------------------------------------------------------
# hyperparameter tuning


@dataclass(frozen=True)
class TuneGrid:
    """Validation grid over (max_depth, alpha); min_leaf stays fixed."""

    depths: tuple[int, ...] = (1, 2, 3, 4, 5)
    alphas: tuple[float, ...] = (0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    validation_fraction: float = 0.3
    min_leaf: int = 1
    restarts: int = 20

    def __post_init__(self):
        if not self.depths or not self.alphas:
            raise ConfigError("tuning grid must have at least one depth and one alpha")
        if any(d < 0 for d in self.depths):
            raise ConfigError("tuning depths must be >= 0")
        if any(a < 0 for a in self.alphas):
            raise ConfigError("tuning alphas must be >= 0")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if self.min_leaf < 1:
            raise ConfigError("min_leaf must be >= 1")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")


def tune(rewards: RewardMatrix, features, grid: TuneGrid = TuneGrid(), seed: int = 0,
         method: str = "optimal", feature_names=None):
    """Select (max_depth, alpha) on a held-out split, then refit on all rows.

    Cells are scored by the mean reward of their prescriptions on the
    validation rows (using the validation rows' own reward entries). Ties
    prefer the smaller tree: fewer branch nodes, then smaller depth cap,
    then larger alpha. Returns ``(hyperparams, tree)``.
    """
    if method not in ("optimal", "greedy"):
        raise ConfigError(f"unknown tuning method {method!r}")
    hp_probe = Hyperparameters(max_depth=max(grid.depths), min_leaf=grid.min_leaf,
                               restarts=grid.restarts, seed=seed)
    X, G = _validate_training(rewards, features, hp_probe)
    n = X.shape[0]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = min(max(int(round(grid.validation_fraction * n)), 1), n - 1)
    val_rows, train_rows = perm[:n_val], perm[n_val:]
    if train_rows.size < grid.min_leaf or val_rows.size < grid.min_leaf:
        raise InputError(
            f"validation split leaves fewer than min_leaf={grid.min_leaf} rows on one side"
        )
    train_rewards = RewardMatrix(values=G[train_rows], candidate_labels=rewards.candidate_labels)
    X_train, X_val = X[train_rows], X[val_rows]
    fit = fit_optimal if method == "optimal" else fit_greedy
    alphas = grid.alphas if method == "optimal" else (grid.alphas[0],)
    best = None
    for depth in grid.depths:
        for alpha in alphas:
            hp = Hyperparameters(max_depth=depth, alpha=alpha, min_leaf=grid.min_leaf,
                                 restarts=grid.restarts, seed=seed)
            tree = fit(train_rewards, X_train, hp)
            prescriptions = tree.prescribe_batch(X_val)
            score = float(G[val_rows, prescriptions].mean())
            tie_key = (tree.n_branches, depth, -alpha)
            if best is None or score < best[0] or (score == best[0] and tie_key < best[1]):
                best = (score, tie_key, hp)
    hp_best = best[2]
    final = fit(rewards, features, hp_best, feature_names=feature_names)
    return hp_best, final

import numpy as np
import pytest

from policytrees import _kernels
from policytrees.data import RewardMatrix
from policytrees.tree import Branch, Leaf, PolicyTree


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # pay the one-time JIT cost before any timed test runs
    _kernels.warmup()


def random_instance(seed, n_lo=8, n_hi=41, p_hi=3, t_hi=3):
    """Small random (X, rewards) pair for oracle/dominance checks."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_lo, n_hi))
    p = int(rng.integers(1, p_hi + 1))
    T = int(rng.integers(2, t_hi + 1))
    X = rng.normal(size=(n, p))
    rewards = RewardMatrix(rng.normal(size=(n, T)),
                           tuple(f"t{k}" for k in range(T)))
    return X, rewards


def random_arena_tree(seed, p=3, T=3, depth=3):
    """Hand-built random PolicyTree (not fitted to any data)."""
    rng = np.random.default_rng(seed)
    nodes = []

    def build(level):
        slot = len(nodes)
        nodes.append(None)
        if level >= depth or rng.random() < 0.35:
            nodes[slot] = Leaf(treatment=int(rng.integers(T)), n_train=int(rng.integers(1, 9)))
        else:
            feature = int(rng.integers(p))
            threshold = float(np.round(rng.normal(), 3))
            left = build(level + 1)
            right = build(level + 1)
            nodes[slot] = Branch(feature=feature, threshold=threshold, left=left, right=right)
        return slot

    build(0)
    return PolicyTree(nodes=tuple(nodes), n_features=p, n_treatments=T)


def margin_instance(n=60, seed=0):
    """Treatment 0 is better by one unit iff x1 < 0; unique optimal split at 0."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    values = np.zeros((n, 2))
    values[:, 0] = np.where(X[:, 0] < 0, 0.0, 1.0)
    values[:, 1] = np.where(X[:, 0] < 0, 1.0, 0.0)
    return X, RewardMatrix(values, ("a", "b"))


def xor_lattice(side=10):
    """Balanced checkerboard: best treatment = xor(x1 > 0, x2 > 0), 4 * side^2 points.

    Every axis-aligned split has exactly zero first-split gain, so greedy
    stops at depth 0 while a depth-2 tree reaches cost 0.
    """
    vals = np.r_[-(np.arange(1, side + 1)) / side, np.arange(1, side + 1) / side]
    xx, yy = np.meshgrid(vals, vals)
    X = np.c_[xx.ravel(), yy.ravel()]
    best = np.logical_xor(X[:, 0] > 0, X[:, 1] > 0).astype(int)
    values = np.zeros((X.shape[0], 2))
    values[np.arange(X.shape[0]), 1 - best] = 1.0
    return X, RewardMatrix(values, ("a", "b"))

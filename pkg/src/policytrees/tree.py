"""Tree-structured prescription policies and their evaluation semantics.

A policy tree routes a feature vector through axis-aligned splits (strict
``<`` goes left, ties go right) to a leaf, and prescribes that leaf's
treatment. Nodes live in an index arena with children stored after their
parent, which makes acyclicity a simple ordering check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .data import Hyperparameters, RewardMatrix, as_float_matrix
from .errors import InputError, InternalError, ParseError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Branch:
    feature: int
    threshold: float
    left: int
    right: int


@dataclass(frozen=True)
class Leaf:
    treatment: int
    n_train: int


@dataclass(frozen=True)
class PolicyTree:
    """Immutable prescription policy over an arena of Branch/Leaf nodes.

    Parameters
    ----------
    nodes : sequence of Branch | Leaf
        Arena with the root at index 0 and children after their parent.
    n_features : int
        Feature count the tree was trained on; routing inputs must match.
    n_treatments : int
        Number of candidate treatments; leaf treatments index into it.
    feature_names, treatment_labels : optional
        Display names used by documents and rendering.
    hyperparams : Hyperparameters, optional
        Settings the tree was trained under; when present, depth and leaf
        sizes are checked against them.
    objective_train : float, optional
        Penalized training objective (mean reward + alpha * branch count).
    """

    nodes: tuple
    n_features: int
    n_treatments: int
    feature_names: tuple[str, ...] | None = None
    treatment_labels: tuple[str, ...] | None = None
    hyperparams: Hyperparameters | None = None
    objective_train: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.treatment_labels is not None:
            object.__setattr__(self, "treatment_labels", tuple(self.treatment_labels))
        self._validate()

    def _validate(self):
        nodes = self.nodes
        if not nodes:
            raise InputError("a policy tree needs at least one node")
        if self.n_features < 1:
            raise InputError("n_features must be >= 1")
        if self.n_treatments < 2:
            raise InputError("n_treatments must be >= 2")
        referenced = np.zeros(len(nodes), dtype=int)
        for i, node in enumerate(nodes):
            if isinstance(node, Branch):
                for child in (node.left, node.right):
                    if not (i < child < len(nodes)):
                        raise InputError(
                            f"node {i}: child index {child} must follow its parent"
                        )
                    referenced[child] += 1
                if not 0 <= node.feature < self.n_features:
                    raise InputError(f"node {i}: split feature {node.feature} out of range")
                if not np.isfinite(node.threshold):
                    raise InputError(f"node {i}: split threshold must be finite")
            elif isinstance(node, Leaf):
                if not 0 <= node.treatment < self.n_treatments:
                    raise InputError(
                        f"node {i}: leaf treatment {node.treatment} out of range"
                    )
                if node.n_train < 0:
                    raise InputError(f"node {i}: negative n_train")
            else:
                raise InputError(f"node {i}: unknown node type {type(node).__name__}")
        if referenced[0] != 0:
            raise InputError("root node must not be a child")
        if np.any(referenced[1:] != 1):
            orphan = int(np.argwhere(referenced[1:] != 1)[0][0]) + 1
            raise InputError(f"node {orphan}: referenced {referenced[orphan]} times, expected 1")
        if self.feature_names is not None and len(self.feature_names) != self.n_features:
            raise InputError("feature_names length does not match n_features")
        if self.treatment_labels is not None and len(self.treatment_labels) != self.n_treatments:
            raise InputError("treatment_labels length does not match n_treatments")
        if self.hyperparams is not None:
            if self.depth() > self.hyperparams.max_depth:
                raise InputError(
                    f"tree depth {self.depth()} exceeds max_depth {self.hyperparams.max_depth}"
                )
            for i, node in enumerate(nodes):
                if isinstance(node, Leaf) and node.n_train < self.hyperparams.min_leaf:
                    raise InputError(
                        f"node {i}: leaf holds {node.n_train} rows, below min_leaf "
                        f"{self.hyperparams.min_leaf}"
                    )

    @cached_property
    def _arrays(self):
        feature = np.full(len(self.nodes), -1, np.int64)
        threshold = np.zeros(len(self.nodes))
        left = np.full(len(self.nodes), -1, np.int64)
        right = np.full(len(self.nodes), -1, np.int64)
        for i, node in enumerate(self.nodes):
            if isinstance(node, Branch):
                feature[i] = node.feature
                threshold[i] = node.threshold
                left[i] = node.left
                right[i] = node.right
        return feature, threshold, left, right

    def depth(self) -> int:
        depths = np.zeros(len(self.nodes), dtype=int)
        out = 0
        for i, node in enumerate(self.nodes):
            out = max(out, depths[i])
            if isinstance(node, Branch):
                depths[node.left] = depths[i] + 1
                depths[node.right] = depths[i] + 1
        return out

    def leaf_ids(self) -> list[int]:
        return [i for i, node in enumerate(self.nodes) if isinstance(node, Leaf)]

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_ids())

    @property
    def n_branches(self) -> int:
        return len(self.nodes) - self.n_leaves

    def _check_row(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.n_features:
            raise InputError(
                f"feature vector has shape {x.shape}, expected ({self.n_features},)"
            )
        if not np.all(np.isfinite(x)):
            raise InputError("feature vector contains a non-finite value")
        return x

    def assign_leaf(self, x) -> int:
        """Arena id of the leaf ``x`` is routed to."""
        x = self._check_row(x)
        i = 0
        node = self.nodes[0]
        while isinstance(node, Branch):
            i = node.left if x[node.feature] < node.threshold else node.right
            node = self.nodes[i]
        return i

    def assign_leaf_batch(self, X) -> np.ndarray:
        X = as_float_matrix(X, "features")
        if X.shape[1] != self.n_features:
            raise InputError(
                f"features have {X.shape[1]} columns, tree expects {self.n_features}"
            )
        if X.shape[0] == 0:
            return np.empty(0, np.int64)
        return _kernels.route_to_leaf(np.ascontiguousarray(X), *self._arrays)

    def prescribe(self, x) -> int:
        """Treatment index prescribed to a single feature vector."""
        return self.nodes[self.assign_leaf(x)].treatment

    def prescribe_batch(self, X) -> np.ndarray:
        leaves = self.assign_leaf_batch(X)
        treatments = np.array(
            [node.treatment if isinstance(node, Leaf) else -1 for node in self.nodes],
            dtype=np.int64,
        )
        return treatments[leaves]

    def decision_path(self, x) -> list[tuple[int, float, bool]]:
        """Splits traversed by ``x``: (feature, threshold, went_left) per branch."""
        x = self._check_row(x)
        path = []
        node = self.nodes[0]
        while isinstance(node, Branch):
            went_left = bool(x[node.feature] < node.threshold)
            path.append((node.feature, node.threshold, went_left))
            node = self.nodes[node.left if went_left else node.right]
        return path

    def to_document(self) -> dict:
        """Nested JSON-style document; inverse of :meth:`from_document`."""
        def emit(i):
            node = self.nodes[i]
            if isinstance(node, Leaf):
                return {"treatment": node.treatment, "n_train": node.n_train}
            return {
                "feature": node.feature,
                "threshold": node.threshold,
                "left": emit(node.left),
                "right": emit(node.right),
            }

        hp = None
        if self.hyperparams is not None:
            hp = {
                "max_depth": self.hyperparams.max_depth,
                "alpha": self.hyperparams.alpha,
                "min_leaf": self.hyperparams.min_leaf,
                "restarts": self.hyperparams.restarts,
                "seed": self.hyperparams.seed,
            }
        return {
            "format_version": FORMAT_VERSION,
            "n_features": self.n_features,
            "n_treatments": self.n_treatments,
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "treatment_labels": list(self.treatment_labels) if self.treatment_labels else None,
            "hyperparams": hp,
            "objective_train": self.objective_train,
            "root": emit(0),
        }

    @classmethod
    def from_document(cls, doc) -> "PolicyTree":
        if not isinstance(doc, dict):
            raise ParseError("tree document must be an object")
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ParseError(f"unsupported tree document format_version: {version!r}")
        for key in ("n_features", "n_treatments", "root"):
            if key not in doc:
                raise ParseError(f"tree document is missing {key!r}")
        nodes: list = []

        def parse(obj, where):
            if not isinstance(obj, dict):
                raise ParseError(f"{where}: node must be an object")
            slot = len(nodes)
            nodes.append(None)
            if "treatment" in obj:
                for key in ("treatment", "n_train"):
                    if key not in obj:
                        raise ParseError(f"{where}: leaf is missing {key!r}")
                nodes[slot] = Leaf(treatment=int(obj["treatment"]), n_train=int(obj["n_train"]))
                return slot
            for key in ("feature", "threshold", "left", "right"):
                if key not in obj:
                    raise ParseError(f"{where}: branch is missing {key!r}")
            left = parse(obj["left"], where + ".left")
            right = parse(obj["right"], where + ".right")
            nodes[slot] = Branch(
                feature=int(obj["feature"]),
                threshold=float(obj["threshold"]),
                left=left,
                right=right,
            )
            return slot

        parse(doc["root"], "root")
        hp = None
        if doc.get("hyperparams") is not None:
            h = doc["hyperparams"]
            try:
                hp = Hyperparameters(
                    max_depth=int(h["max_depth"]),
                    alpha=float(h["alpha"]),
                    min_leaf=int(h["min_leaf"]),
                    restarts=int(h["restarts"]),
                    seed=int(h["seed"]),
                )
            except KeyError as exc:
                raise ParseError(f"hyperparams is missing {exc}") from None
        try:
            return cls(
                nodes=tuple(nodes),
                n_features=int(doc["n_features"]),
                n_treatments=int(doc["n_treatments"]),
                feature_names=doc.get("feature_names"),
                treatment_labels=doc.get("treatment_labels"),
                hyperparams=hp,
                objective_train=doc.get("objective_train"),
            )
        except InputError as exc:
            raise ParseError(f"invalid tree document: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PolicyTree":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"tree document is not valid JSON: {exc}") from None
        return cls.from_document(doc)

    def render(self) -> str:
        """Deterministic indented text view; the left child is printed first."""
        names = self.feature_names or tuple(f"x{j + 1}" for j in range(self.n_features))
        labels = self.treatment_labels or tuple(str(t) for t in range(self.n_treatments))
        lines = []

        def walk(i, indent):
            node = self.nodes[i]
            pad = "  " * indent
            if isinstance(node, Leaf):
                lines.append(f"{pad}prescribe {labels[node.treatment]} (n={node.n_train})")
            else:
                lines.append(f"{pad}{names[node.feature]} < {node.threshold:g}")
                walk(node.left, indent + 1)
                walk(node.right, indent + 1)

        walk(0, 0)
        return "\n".join(lines)


def policy_objective(tree: PolicyTree, rewards: RewardMatrix, features) -> float:
    """Mean reward of the tree's prescriptions: (1/n) * sum_i values[i, tau(x_i)]."""
    X = as_float_matrix(features, "features")
    if rewards.n != X.shape[0]:
        raise InputError(
            f"rewards have {rewards.n} rows but features have {X.shape[0]}"
        )
    prescriptions = tree.prescribe_batch(X)
    if rewards.n_candidates < tree.n_treatments:
        raise InternalError("reward matrix is narrower than the tree's treatment set")
    return float(rewards.values[np.arange(rewards.n), prescriptions].mean())


def penalized_objective(tree: PolicyTree, rewards: RewardMatrix, features, alpha: float) -> float:
    """Training objective: mean reward plus ``alpha`` per branch node."""
    return policy_objective(tree, rewards, features) + alpha * tree.n_branches

"""CART-style multi-output regression tree grown best-first."""

import heapq
import logging
from typing import Dict, Tuple

import numpy as np

from .exceptions import FeatureMismatchError, ShapeMismatchError

logger = logging.getLogger(__name__)

LEAF = -1

# upper bound on elements of one (rows x features x outputs) gain block
_CHUNK_ELEMENTS = 2**21
# gains at or below this fraction of the node's sum of squares are rounding noise
_MIN_RELATIVE_GAIN = 1e-13


def check_xy(X, Y) -> Tuple[np.ndarray, np.ndarray]:
    """Coerce to 2D float arrays and check that rows line up."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or Y.ndim != 2:
        raise ShapeMismatchError(f"expected 2D inputs, got X{X.shape} and Y{Y.shape}")
    if X.shape[0] != Y.shape[0] or X.shape[0] == 0:
        raise ShapeMismatchError(
            f"X has {X.shape[0]} rows but Y has {Y.shape[0]}; need equal and >= 1"
        )
    return X, Y


def best_splits(
    X: np.ndarray,
    Y: np.ndarray,
    min_samples_leaf: int,
    min_samples_split: int,
    joint: bool,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Find the squared-error-optimal split of one node.

    Candidates sit between consecutive distinct sorted values of a feature;
    rows with ``x <= threshold`` go left. Ties resolve to the lower feature
    index, then the lower threshold.

    Args:
        X: Node rows (m x F)
        Y: Node targets (m x D)
        min_samples_leaf: Minimum rows in each child
        min_samples_split: Minimum rows to split at all
        joint: Sum the impurity decrease over outputs (one split) instead of
            one split per output

    Returns:
        ``(features, thresholds, gains)`` of length 1 when ``joint`` else D;
        a gain of ``-inf`` means no admissible split
    """
    m, n_features = X.shape
    k = 1 if joint else Y.shape[1]
    best_gain = np.full(k, -np.inf)
    best_feature = np.zeros(k, dtype=np.int64)
    best_threshold = np.full(k, np.inf)
    if m < min_samples_split or m < 2 * min_samples_leaf or m < 2:
        return best_feature, best_threshold, best_gain

    Yc = Y - Y.mean(axis=0)
    total = Yc.sum(axis=0)
    parent = total**2 / m
    floor = _MIN_RELATIVE_GAIN * (Y**2).sum(axis=0)
    if joint:
        floor = np.atleast_1d(floor.sum())

    n_left = np.arange(1, m, dtype=float)
    n_right = m - n_left
    admissible = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    chunk = max(1, _CHUNK_ELEMENTS // (m * Y.shape[1]))

    for start in range(0, n_features, chunk):
        block = X[:, start : start + chunk]
        order = np.argsort(block, axis=0, kind="stable")
        xs = np.take_along_axis(block, order, axis=0)
        cs = np.cumsum(Yc[order], axis=0)[:-1]
        gain = (
            cs**2 / n_left[:, None, None]
            + (total - cs) ** 2 / n_right[:, None, None]
            - parent
        )
        if joint:
            gain = gain.sum(axis=-1, keepdims=True)
        ok = (xs[1:] > xs[:-1]) & admissible[:, None]
        gain = np.where(ok[:, :, None], gain, -np.inf)

        # row-major over (feature, position): argmax picks the lowest of both
        flat = gain.transpose(1, 0, 2).reshape(-1, k)
        pick = flat.argmax(axis=0)
        chosen = flat[pick, np.arange(k)]
        better = (chosen > best_gain) & (chosen > floor)
        if not np.any(better):
            continue

        local = pick // (m - 1)
        pos = pick % (m - 1)
        lo = xs[pos, local]
        hi = xs[pos + 1, local]
        threshold = 0.5 * (lo + hi)
        threshold = np.where(threshold >= hi, lo, threshold)

        best_gain = np.where(better, chosen, best_gain)
        best_feature = np.where(better, start + local, best_feature)
        best_threshold = np.where(better, threshold, best_threshold)

    return best_feature, best_threshold, best_gain


class RegressionTree:
    """
    Multi-output regression tree with a joint variance criterion.

    Growth is best-first: the pending node with the largest impurity decrease
    is split next, until ``max_leaf_nodes`` leaves exist or nothing is left
    to split. Nodes are stored in flat arrays; ``feature == -1`` marks a leaf.
    """

    def __init__(
        self,
        max_leaf_nodes: int = 110,
        min_samples_leaf: int = 1,
        min_samples_split: int = 2,
    ):
        self.max_leaf_nodes = max_leaf_nodes
        self.min_samples_leaf = min_samples_leaf
        self.min_samples_split = min_samples_split

    def fit(self, X, Y) -> "RegressionTree":
        X, Y = check_xy(X, Y)
        self.n_features_ = X.shape[1]
        self.n_outputs_ = Y.shape[1]

        feature, threshold, left, right, value, n_samples = [], [], [], [], [], []

        def new_node(rows: np.ndarray) -> int:
            feature.append(LEAF)
            threshold.append(np.nan)
            left.append(LEAF)
            right.append(LEAF)
            value.append(Y[rows].mean(axis=0))
            n_samples.append(len(rows))
            return len(feature) - 1

        pending = []
        rows_of: Dict[int, np.ndarray] = {}

        def consider(node: int, rows: np.ndarray) -> None:
            f, t, g = best_splits(
                X[rows], Y[rows], self.min_samples_leaf, self.min_samples_split, joint=True
            )
            if np.isfinite(g[0]):
                rows_of[node] = rows
                heapq.heappush(pending, (-float(g[0]), node, int(f[0]), float(t[0])))

        root_rows = np.arange(X.shape[0])
        root = new_node(root_rows)
        consider(root, root_rows)
        n_leaves = 1

        while pending and n_leaves < self.max_leaf_nodes:
            _, node, f, t = heapq.heappop(pending)
            rows = rows_of.pop(node)
            goes_left = X[rows, f] <= t
            l_node = new_node(rows[goes_left])
            r_node = new_node(rows[~goes_left])
            feature[node], threshold[node] = f, t
            left[node], right[node] = l_node, r_node
            n_leaves += 1
            consider(l_node, rows[goes_left])
            consider(r_node, rows[~goes_left])

        self.feature_ = np.asarray(feature, dtype=np.int64)
        self.threshold_ = np.asarray(threshold, dtype=float)
        self.children_left_ = np.asarray(left, dtype=np.int64)
        self.children_right_ = np.asarray(right, dtype=np.int64)
        self.value_ = np.vstack(value)
        self.n_node_samples_ = np.asarray(n_samples, dtype=np.int64)
        logger.debug(f"Grew tree with {self.n_leaves} leaves on {X.shape[0]} rows")
        return self

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature_ == LEAF))

    def apply(self, X) -> np.ndarray:
        """Index of the leaf each row lands in."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise FeatureMismatchError(
                f"expected {self.n_features_} feature columns, got {X.shape}"
            )
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            internal = self.feature_[node] != LEAF
            if not np.any(internal):
                return node
            r = rows[internal]
            n = node[internal]
            go_left = X[r, self.feature_[n]] <= self.threshold_[n]
            node[internal] = np.where(
                go_left, self.children_left_[n], self.children_right_[n]
            )

    def predict(self, X) -> np.ndarray:
        return self.value_[self.apply(X)]

    # ---------- serialization ----------

    def to_arrays(self, prefix: str) -> Dict[str, np.ndarray]:
        return {
            f"{prefix}feature": self.feature_,
            f"{prefix}threshold": self.threshold_,
            f"{prefix}left": self.children_left_,
            f"{prefix}right": self.children_right_,
            f"{prefix}value": self.value_,
            f"{prefix}n_samples": self.n_node_samples_,
        }

    @classmethod
    def from_arrays(cls, arrays, prefix: str, n_features: int) -> "RegressionTree":
        tree = cls()
        tree.feature_ = np.asarray(arrays[f"{prefix}feature"], dtype=np.int64)
        tree.threshold_ = np.asarray(arrays[f"{prefix}threshold"], dtype=float)
        tree.children_left_ = np.asarray(arrays[f"{prefix}left"], dtype=np.int64)
        tree.children_right_ = np.asarray(arrays[f"{prefix}right"], dtype=np.int64)
        tree.value_ = np.asarray(arrays[f"{prefix}value"], dtype=float)
        tree.n_node_samples_ = np.asarray(arrays[f"{prefix}n_samples"], dtype=np.int64)
        tree.n_features_ = n_features
        tree.n_outputs_ = tree.value_.shape[1]
        return tree

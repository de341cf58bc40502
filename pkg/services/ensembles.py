"""Bagged regression trees and stochastic gradient boosting."""

import logging
from typing import Dict, List, Optional

import numpy as np
from joblib import Parallel, delayed

from .exceptions import FeatureMismatchError
from .regression_tree import RegressionTree, best_splits, check_xy
from .seeding import PURPOSE_BOOTSTRAP, PURPOSE_SUBSAMPLE, derive_rng

logger = logging.getLogger(__name__)

_PREDICT_CHUNK_ELEMENTS = 2**22


def _check_features(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise FeatureMismatchError(f"expected {n_features} feature columns, got {X.shape}")
    return X


class RandomForest:
    """Bootstrap-aggregated regression trees; every feature is tried at every split."""

    def __init__(
        self,
        n_estimators: int = 100,
        max_leaf_nodes: int = 110,
        min_samples_leaf: int = 1,
        min_samples_split: int = 2,
        bootstrap: bool = True,
        seed: int = 0,
        n_jobs: int = 1,
    ):
        self.n_estimators = n_estimators
        self.max_leaf_nodes = max_leaf_nodes
        self.min_samples_leaf = min_samples_leaf
        self.min_samples_split = min_samples_split
        self.bootstrap = bootstrap
        self.seed = seed
        self.n_jobs = n_jobs

    def _tree(self) -> RegressionTree:
        return RegressionTree(
            max_leaf_nodes=self.max_leaf_nodes,
            min_samples_leaf=self.min_samples_leaf,
            min_samples_split=self.min_samples_split,
        )

    def _fit_one(self, X: np.ndarray, Y: np.ndarray, t: int) -> RegressionTree:
        if self.bootstrap:
            n = X.shape[0]
            rows = derive_rng(self.seed, t, PURPOSE_BOOTSTRAP).integers(0, n, size=n)
            return self._tree().fit(X[rows], Y[rows])
        return self._tree().fit(X, Y)

    def fit(self, X, Y) -> "RandomForest":
        X, Y = check_xy(X, Y)
        self.n_features_ = X.shape[1]
        self.n_outputs_ = Y.shape[1]
        # per-tree seeds make the result independent of n_jobs
        self.trees_: List[RegressionTree] = Parallel(n_jobs=self.n_jobs, prefer="threads")(
            delayed(self._fit_one)(X, Y, t) for t in range(self.n_estimators)
        )
        logger.debug(f"Fitted forest of {len(self.trees_)} trees")
        return self

    def predict(self, X) -> np.ndarray:
        X = _check_features(X, self.n_features_)
        total = np.zeros((X.shape[0], self.n_outputs_))
        for tree in self.trees_:
            total += tree.predict(X)
        return total / len(self.trees_)


class GradientBoosting:
    """
    Squared-error gradient boosting with one ensemble per output column.

    Stage trees are complete binary trees of depth ``max_depth`` kept in
    arrays: ``features_``/``thresholds_`` are (stages, outputs, 2^depth - 1)
    in heap order and ``leaves_`` is (stages, outputs, 2^depth). A node that
    could not be split sends every row left (threshold ``+inf``).
    """

    def __init__(
        self,
        learning_rate: float = 0.1,
        max_depth: int = 2,
        n_estimators: int = 100,
        subsample: float = 1.0,
        seed: int = 0,
    ):
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.n_estimators = n_estimators
        self.subsample = subsample
        self.seed = seed

    @property
    def n_internal(self) -> int:
        return 2**self.max_depth - 1

    def _stage_rows(self, stage: int, n: int) -> np.ndarray:
        if self.subsample >= 1.0:
            return np.arange(n)
        size = max(1, int(self.subsample * n))
        rng = derive_rng(self.seed, stage, PURPOSE_SUBSAMPLE)
        return np.sort(rng.choice(n, size=size, replace=False))

    def _grow_stage(self, X: np.ndarray, R: np.ndarray):
        """Fit one depth-limited tree per residual column, level by level.

        Columns whose rows reach the same node through identical splits are
        processed together, so their candidate sort is shared.
        """
        n_out = R.shape[1]
        features = np.zeros((n_out, self.n_internal), dtype=np.int64)
        thresholds = np.full((n_out, self.n_internal), np.inf)
        leaves = np.zeros((n_out, self.n_internal + 1))

        frontier = [(np.arange(X.shape[0]), np.arange(n_out), 0)]
        for _ in range(self.max_depth):
            next_frontier = []
            for rows, outs, node in frontier:
                f, t, g = best_splits(X[rows], R[np.ix_(rows, outs)], 1, 2, joint=False)
                t = np.where(np.isfinite(g), t, np.inf)
                f = np.where(np.isfinite(g), f, 0)
                features[outs, node] = f
                thresholds[outs, node] = t

                pairs = np.column_stack([f.astype(float), t])
                unique, group = np.unique(pairs, axis=0, return_inverse=True)
                group = np.ravel(group)
                for u, (feat, thr) in enumerate(unique):
                    members = outs[group == u]
                    goes_left = X[rows, int(feat)] <= thr
                    next_frontier.append((rows[goes_left], members, 2 * node + 1))
                    next_frontier.append((rows[~goes_left], members, 2 * node + 2))
            frontier = next_frontier

        for rows, outs, node in frontier:
            if rows.size:
                leaves[outs, node - self.n_internal] = R[np.ix_(rows, outs)].mean(axis=0)
        return features, thresholds, leaves

    def _stage_predict(self, X: np.ndarray, features, thresholds, leaves) -> np.ndarray:
        n_out = features.shape[0]
        out_idx = np.arange(n_out)[None, :]
        node = np.zeros((X.shape[0], n_out), dtype=np.int64)
        rows = np.arange(X.shape[0])[:, None]
        for _ in range(self.max_depth):
            f = features[out_idx, node]
            right = X[rows, f] > thresholds[out_idx, node]
            node = 2 * node + 1 + right
        return leaves[out_idx, node - self.n_internal]

    def fit(self, X, Y) -> "GradientBoosting":
        X, Y = check_xy(X, Y)
        n, n_out = Y.shape
        self.n_features_ = X.shape[1]
        self.init_ = Y.mean(axis=0)
        S = self.n_estimators
        self.features_ = np.zeros((S, n_out, self.n_internal), dtype=np.int64)
        self.thresholds_ = np.full((S, n_out, self.n_internal), np.inf)
        self.leaves_ = np.zeros((S, n_out, self.n_internal + 1))
        self.loss_curve_: List[float] = []

        F = np.tile(self.init_, (n, 1))
        for stage in range(S):
            rows = self._stage_rows(stage, n)
            residual = Y - F
            f, t, v = self._grow_stage(X[rows], residual[rows])
            self.features_[stage], self.thresholds_[stage], self.leaves_[stage] = f, t, v
            F += self.learning_rate * self._stage_predict(X, f, t, v)
            self.loss_curve_.append(float(np.mean((Y - F) ** 2)))
            if stage % 100 == 0:
                logger.debug(f"GBR stage {stage}: training MSE {self.loss_curve_[-1]:.6g}")
        return self

    def predict(self, X) -> np.ndarray:
        """Stage-major evaluation: every node of every (stage, output) tree
        is tested for all rows, then leaves are selected bottom-up."""
        X = _check_features(X, self.n_features_)
        n = X.shape[0]
        S, n_out, n_internal = self.features_.shape
        pred = np.tile(self.init_, (n, 1))
        if S == 0:
            return pred

        K = S * n_out
        features = self.features_.reshape(K, n_internal)
        thresholds = self.thresholds_.reshape(K, n_internal)
        leaves = self.leaves_.reshape(K, n_internal + 1)
        step = max(1, _PREDICT_CHUNK_ELEMENTS // K)
        for start in range(0, n, step):
            XT = np.ascontiguousarray(X[start : start + step].T)
            values = {n_internal + j: leaves[:, j, None] for j in range(n_internal + 1)}
            for node in range(n_internal - 1, -1, -1):
                right = XT[features[:, node]] > thresholds[:, node, None]
                values[node] = np.where(right, values.pop(2 * node + 2), values.pop(2 * node + 1))
            total = np.broadcast_to(values[0], (K, XT.shape[1])).reshape(S, n_out, -1)
            pred[start : start + step] += self.learning_rate * total.sum(axis=0).T
        return pred

    # ---------- serialization ----------

    def to_arrays(self) -> Dict[str, np.ndarray]:
        return {
            "gbr_init": self.init_,
            "gbr_features": self.features_,
            "gbr_thresholds": self.thresholds_,
            "gbr_leaves": self.leaves_,
            "gbr_loss_curve": np.asarray(self.loss_curve_, dtype=float),
        }

    @classmethod
    def from_arrays(
        cls, arrays, n_features: int, learning_rate: float, max_depth: int, seed: Optional[int] = 0
    ) -> "GradientBoosting":
        model = cls(learning_rate=learning_rate, max_depth=max_depth, seed=seed)
        model.init_ = np.asarray(arrays["gbr_init"], dtype=float)
        model.features_ = np.asarray(arrays["gbr_features"], dtype=np.int64)
        model.thresholds_ = np.asarray(arrays["gbr_thresholds"], dtype=float)
        model.leaves_ = np.asarray(arrays["gbr_leaves"], dtype=float)
        model.loss_curve_ = np.asarray(arrays["gbr_loss_curve"], dtype=float).tolist()
        model.n_estimators = model.features_.shape[0]
        model.n_features_ = n_features
        return model

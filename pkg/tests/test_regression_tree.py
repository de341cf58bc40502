"""
Test suite for the best-first regression tree.
"""

import numpy as np
import pytest

from services import RegressionTree
from services.exceptions import FeatureMismatchError, ShapeMismatchError
from services.regression_tree import LEAF, best_splits


@pytest.mark.unit
class TestBestSplits:
    """Test the node split search."""

    def test_midpoint_threshold(self):
        """Test that a clean step is split halfway between the two groups."""
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        Y = np.array([[0.0], [0.0], [5.0], [5.0]])

        feature, threshold, gain = best_splits(X, Y, 1, 2, joint=True)

        assert feature[0] == 0
        assert threshold[0] == 1.5
        assert gain[0] == pytest.approx(25.0)

    def test_ties_go_to_lower_feature(self):
        """Test that duplicated columns resolve to the first one."""
        x = np.array([0.0, 1.0, 2.0, 3.0])
        X = np.column_stack([x, x])
        Y = np.array([[0.0], [0.0], [1.0], [1.0]])

        feature, _, _ = best_splits(X, Y, 1, 2, joint=True)

        assert feature[0] == 0

    def test_per_output_splits(self):
        """Test that joint=False returns one split per output column."""
        X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0], [3.0, 1.0]])
        Y = np.column_stack([[0.0, 0.0, 1.0, 1.0], [0.0, 1.0, 0.0, 1.0]])

        feature, threshold, _ = best_splits(X, Y, 1, 2, joint=False)

        assert feature.tolist() == [0, 1]
        assert threshold.tolist() == [1.5, 0.5]

    def test_no_admissible_split(self):
        """Test that a constant feature yields no split."""
        X = np.ones((4, 1))
        Y = np.arange(4.0)[:, None]

        _, _, gain = best_splits(X, Y, 1, 2, joint=True)

        assert gain[0] == -np.inf

    def test_min_samples_leaf(self):
        """Test that both children respect the leaf minimum."""
        X = np.arange(6.0)[:, None]
        Y = np.array([[10.0], [0.0], [0.0], [0.0], [0.0], [0.0]])

        _, threshold, _ = best_splits(X, Y, 2, 2, joint=True)

        assert threshold[0] >= 1.5


@pytest.mark.unit
class TestRegressionTree:
    """Test tree growth and prediction."""

    def test_step_function(self):
        """Test that two leaves recover a step exactly."""
        X = np.arange(10.0)[:, None]
        Y = np.where(X > 4, 3.0, 1.0)

        tree = RegressionTree(max_leaf_nodes=2).fit(X, Y)

        assert tree.n_leaves == 2
        assert tree.threshold_[0] == 4.5
        np.testing.assert_array_equal(tree.predict(X), Y)

    def test_leaf_budget(self, regression_data):
        """Test that growth stops at max_leaf_nodes."""
        X, Y = regression_data
        tree = RegressionTree(max_leaf_nodes=7).fit(X, Y)

        assert tree.n_leaves == 7

    def test_memorizes_distinct_rows(self, regression_data):
        """Test that an unbounded tree reproduces its training targets."""
        X, Y = regression_data
        tree = RegressionTree(max_leaf_nodes=10_000).fit(X, Y)

        np.testing.assert_allclose(tree.predict(X), Y, atol=1e-12)

    def test_constant_target_single_leaf(self, regression_data):
        """Test that a constant target never splits."""
        X, _ = regression_data
        tree = RegressionTree().fit(X, np.full((X.shape[0], 2), 4.2))

        assert tree.n_leaves == 1
        np.testing.assert_allclose(tree.predict(X[:3]), np.full((3, 2), 4.2), rtol=1e-12)

    def test_leaf_sizes(self, regression_data):
        """Test that every leaf holds at least min_samples_leaf rows."""
        X, Y = regression_data
        tree = RegressionTree(max_leaf_nodes=500, min_samples_leaf=5).fit(X, Y)

        leaves = tree.feature_ == LEAF
        assert tree.n_node_samples_[leaves].min() >= 5

    def test_leaf_values_are_means(self, regression_data):
        """Test that a leaf predicts the mean of its training rows."""
        X, Y = regression_data
        tree = RegressionTree(max_leaf_nodes=8).fit(X, Y)
        leaf_of = tree.apply(X)

        for leaf in np.unique(leaf_of):
            np.testing.assert_allclose(tree.value_[leaf], Y[leaf_of == leaf].mean(axis=0))

    def test_one_dimensional_target(self):
        """Test that a 1D target is treated as one column."""
        X = np.arange(4.0)[:, None]
        tree = RegressionTree().fit(X, np.arange(4.0))

        assert tree.predict(X).shape == (4, 1)

    def test_row_mismatch(self):
        """Test that X and Y must have equal rows."""
        with pytest.raises(ShapeMismatchError):
            RegressionTree().fit(np.zeros((3, 2)), np.zeros((4, 1)))

    def test_feature_mismatch(self, regression_data):
        """Test that predicting with the wrong width fails."""
        X, Y = regression_data
        tree = RegressionTree(max_leaf_nodes=4).fit(X, Y)

        with pytest.raises(FeatureMismatchError):
            tree.predict(X[:, :5])

    def test_arrays_restore_predictions(self, regression_data):
        """Test that the flat-array form predicts identically."""
        X, Y = regression_data
        tree = RegressionTree(max_leaf_nodes=16).fit(X, Y)
        restored = RegressionTree.from_arrays(tree.to_arrays("t_"), "t_", X.shape[1])

        np.testing.assert_array_equal(restored.predict(X), tree.predict(X))

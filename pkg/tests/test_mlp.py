"""
Test suite for the multi-layer perceptron.
"""

import numpy as np
import pytest

from services import MultiLayerPerceptron, loss_and_gradients
from services.exceptions import FeatureMismatchError, TrainingDivergedError
from services.mlp import AdamOptimizer, forward, init_params


def numeric_gradient(weights, biases, X, Y, param, eps=1e-6):
    grad = np.zeros_like(param)
    for idx in np.ndindex(param.shape):
        original = param[idx]
        param[idx] = original + eps
        up = loss_and_gradients(weights, biases, X, Y)[0]
        param[idx] = original - eps
        down = loss_and_gradients(weights, biases, X, Y)[0]
        param[idx] = original
        grad[idx] = (up - down) / (2 * eps)
    return grad


@pytest.mark.unit
class TestNetwork:
    """Test the forward pass and backpropagation."""

    def test_init_shapes(self):
        """Test layer shapes and zero biases."""
        weights, biases = init_params([4, 8, 3], np.random.default_rng(0))

        assert [W.shape for W in weights] == [(4, 8), (8, 3)]
        assert all(np.all(b == 0) for b in biases)

    def test_forward_relu(self):
        """Test that hidden units clip at zero and the output is linear."""
        weights = [np.array([[1.0, -1.0]]), np.array([[1.0], [1.0]])]
        biases = [np.zeros(2), np.array([-5.0])]

        out, pre = forward(weights, biases, np.array([[2.0]]))

        assert out[0, 0] == pytest.approx(-3.0)
        np.testing.assert_array_equal(pre[0], [[2.0, -2.0]])

    def test_gradient_check(self):
        """Test backpropagation on a 2-3-2 network against central differences."""
        rng = np.random.default_rng(42)
        weights, biases = init_params([2, 3, 2], rng)
        biases = [rng.normal(0.0, 0.1, size=b.shape) for b in biases]
        X = rng.normal(size=(7, 2))
        Y = rng.normal(size=(7, 2))

        _, grad_w, grad_b = loss_and_gradients(weights, biases, X, Y)

        for analytic, param in zip(grad_w + grad_b, weights + biases):
            numeric = numeric_gradient(weights, biases, X, Y, param)
            np.testing.assert_allclose(analytic, numeric, atol=1e-5)

    def test_adam_first_step(self):
        """Test that the bias-corrected first step moves by the learning rate."""
        param = np.array([1.0, -2.0])
        optimizer = AdamOptimizer([param], learning_rate=0.01)

        optimizer.step([param], [np.array([3.0, -0.5])])

        np.testing.assert_allclose(param, [0.99, -1.99], atol=1e-8)


@pytest.mark.unit
class TestMultiLayerPerceptron:
    """Test training behaviour."""

    def test_fits_small_problem(self):
        """Test that 10 rows are fitted to a small training loss."""
        rng = np.random.default_rng(0)
        X = rng.uniform(-1.0, 1.0, size=(10, 3))
        Y = np.column_stack([X.sum(axis=1), X[:, 0] - X[:, 2]])
        model = MultiLayerPerceptron(
            hidden_layers=[64],
            learning_rate=0.01,
            batch_size=10,
            max_epochs=3000,
            patience=3000,
            validation_fraction=0.0,
        ).fit(X, Y)

        assert model.best_loss_ <= 1e-3
        assert model.predict(X).shape == (10, 2)

    def test_deterministic_for_seed(self, regression_data):
        """Test that equal seeds give equal weights."""
        X, Y = regression_data
        kwargs = dict(hidden_layers=[8], max_epochs=5, seed=3)
        a = MultiLayerPerceptron(**kwargs).fit(X, Y)
        b = MultiLayerPerceptron(**kwargs).fit(X, Y)

        np.testing.assert_array_equal(a.predict(X), b.predict(X))
        assert a.loss_curve_ == b.loss_curve_

    def test_curves_track_epochs(self, regression_data):
        """Test that one loss entry is recorded per epoch run."""
        X, Y = regression_data
        model = MultiLayerPerceptron(hidden_layers=[8], max_epochs=12, patience=2).fit(X, Y)

        assert len(model.loss_curve_) == model.epochs_run_
        assert len(model.validation_curve_) == model.epochs_run_
        assert model.epochs_run_ <= 12
        assert model.best_loss_ == min(model.validation_curve_)

    def test_predictions_in_target_units(self, regression_data):
        """Test that the target scaling is undone on predict."""
        X, Y = regression_data
        model = MultiLayerPerceptron(hidden_layers=[16], max_epochs=50).fit(X, Y)

        assert abs(model.predict(X).mean() - Y.mean()) < 5.0

    def test_divergence(self, regression_data, mocker):
        """Test that a non-finite loss aborts training."""
        X, Y = regression_data
        mocker.patch(
            "services.mlp.loss_and_gradients",
            return_value=(float("nan"), [np.zeros((6, 4)), np.zeros((4, 3))], [np.zeros(4), np.zeros(3)]),
        )

        with pytest.raises(TrainingDivergedError, match="non-finite"):
            MultiLayerPerceptron(hidden_layers=[4], max_epochs=3).fit(X, Y)

    def test_feature_mismatch(self, regression_data):
        """Test that the feature width is checked."""
        X, Y = regression_data
        model = MultiLayerPerceptron(hidden_layers=[4], max_epochs=1).fit(X, Y)

        with pytest.raises(FeatureMismatchError):
            model.predict(X[:, :2])

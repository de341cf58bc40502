"""Fully connected ReLU network trained with Adam on squared error."""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import FeatureMismatchError, TrainingDivergedError
from .regression_tree import check_xy
from .scaler import ScalerParams, apply_scaler, fit_scaler, invert_scaler
from .seeding import PURPOSE_MLP_INIT, PURPOSE_MLP_SHUFFLE, PURPOSE_MLP_SPLIT, derive_rng

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

Params = Tuple[List[np.ndarray], List[np.ndarray]]


def init_params(sizes: Sequence[int], rng: np.random.Generator) -> Params:
    """He-normal weights for hidden layers, 1/fan-in variance for the output layer."""
    weights, biases = [], []
    n_layers = len(sizes) - 1
    for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = 2.0 if layer < n_layers - 1 else 1.0
        weights.append(rng.normal(0.0, np.sqrt(gain / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def forward(weights, biases, X: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Return the output and the pre-activations of every layer."""
    pre = []
    a = X
    last = len(weights) - 1
    for layer, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        pre.append(z)
        a = z if layer == last else np.maximum(z, 0.0)
    return a, pre


def loss_and_gradients(weights, biases, X: np.ndarray, Y: np.ndarray):
    """
    Mean squared error over all elements and its gradients.

    Returns:
        ``(loss, weight_grads, bias_grads)``
    """
    out, pre = forward(weights, biases, X)
    diff = out - Y
    loss = float(np.mean(diff**2))

    delta = 2.0 * diff / diff.size
    grad_w = [None] * len(weights)
    grad_b = [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        a_prev = X if layer == 0 else np.maximum(pre[layer - 1], 0.0)
        grad_w[layer] = a_prev.T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer:
            delta = (delta @ weights[layer].T) * (pre[layer - 1] > 0)
    return loss, grad_w, grad_b


class AdamOptimizer:
    def __init__(self, params: List[np.ndarray], learning_rate: float):
        self.learning_rate = learning_rate
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        """Update ``params`` in place."""
        self.t += 1
        c1 = 1.0 - ADAM_BETA1**self.t
        c2 = 1.0 - ADAM_BETA2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + ADAM_EPSILON)


class MultiLayerPerceptron:
    """
    Regression network with internally standardized targets.

    Inputs are expected to be scaled already. Training uses shuffled
    mini-batches, stops early once the monitored loss has not improved for
    ``patience`` epochs, and keeps the best weights seen.
    """

    def __init__(
        self,
        hidden_layers: Sequence[int] = (128,),
        learning_rate: float = 1e-3,
        batch_size: int = 128,
        max_epochs: int = 300,
        patience: int = 20,
        validation_fraction: float = 0.1,
        seed: int = 0,
    ):
        self.hidden_layers = list(hidden_layers)
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _split(self, n: int) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        n_val = int(round(self.validation_fraction * n))
        if self.validation_fraction <= 0 or n < 2:
            return np.arange(n), None
        n_val = min(max(1, n_val), n - 1)
        perm = derive_rng(self.seed, PURPOSE_MLP_SPLIT).permutation(n)
        return np.sort(perm[n_val:]), np.sort(perm[:n_val])

    def fit(self, X, Y) -> "MultiLayerPerceptron":
        X, Y = check_xy(X, Y)
        self.n_features_ = X.shape[1]
        self.target_scaler_: ScalerParams = fit_scaler(Y)
        Ys = apply_scaler(self.target_scaler_, Y)

        sizes = [X.shape[1], *self.hidden_layers, Y.shape[1]]
        self.weights_, self.biases_ = init_params(sizes, derive_rng(self.seed, PURPOSE_MLP_INIT))
        params = self.weights_ + self.biases_
        optimizer = AdamOptimizer(params, self.learning_rate)

        train, val = self._split(X.shape[0])
        X_tr, Y_tr = X[train], Ys[train]
        X_mon, Y_mon = (X[val], Ys[val]) if val is not None else (X_tr, Y_tr)

        self.loss_curve_: List[float] = []
        self.validation_curve_: List[float] = []
        best = np.inf
        best_params = [p.copy() for p in params]
        stale = 0

        for epoch in range(self.max_epochs):
            perm = derive_rng(self.seed, epoch, PURPOSE_MLP_SHUFFLE).permutation(len(train))
            epoch_loss = 0.0
            for start in range(0, len(perm), self.batch_size):
                batch = perm[start : start + self.batch_size]
                loss, gw, gb = loss_and_gradients(
                    self.weights_, self.biases_, X_tr[batch], Y_tr[batch]
                )
                if not np.isfinite(loss):
                    logger.error(f"MLP loss became non-finite in epoch {epoch}")
                    raise TrainingDivergedError(f"non-finite training loss in epoch {epoch}")
                optimizer.step(params, gw + gb)
                epoch_loss += loss * len(batch)

            self.loss_curve_.append(epoch_loss / len(perm))
            monitored = float(np.mean((forward(self.weights_, self.biases_, X_mon)[0] - Y_mon) ** 2))
            if not np.isfinite(monitored):
                raise TrainingDivergedError(f"non-finite monitored loss in epoch {epoch}")
            self.validation_curve_.append(monitored)

            if monitored < best:
                best = monitored
                best_params = [p.copy() for p in params]
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    logger.debug(f"Early stop after epoch {epoch} (best {best:.6g})")
                    break

        n_w = len(self.weights_)
        self.weights_ = best_params[:n_w]
        self.biases_ = best_params[n_w:]
        self.best_loss_ = best
        self.epochs_run_ = len(self.loss_curve_)
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise FeatureMismatchError(
                f"expected {self.n_features_} feature columns, got {X.shape}"
            )
        out, _ = forward(self.weights_, self.biases_, X)
        return invert_scaler(self.target_scaler_, out)

    # ---------- serialization ----------

    def to_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {
            "mlp_target_mean": self.target_scaler_.mean,
            "mlp_target_std": self.target_scaler_.std,
            "mlp_target_constant": self.target_scaler_.constant,
            "mlp_loss_curve": np.asarray(self.loss_curve_, dtype=float),
            "mlp_validation_curve": np.asarray(self.validation_curve_, dtype=float),
        }
        for i, (W, b) in enumerate(zip(self.weights_, self.biases_)):
            arrays[f"mlp_W{i}"] = W
            arrays[f"mlp_b{i}"] = b
        return arrays

    @classmethod
    def from_arrays(cls, arrays, n_features: int, n_layers: int) -> "MultiLayerPerceptron":
        model = cls()
        model.weights_ = [np.asarray(arrays[f"mlp_W{i}"], dtype=float) for i in range(n_layers)]
        model.biases_ = [np.asarray(arrays[f"mlp_b{i}"], dtype=float) for i in range(n_layers)]
        model.hidden_layers = [W.shape[1] for W in model.weights_[:-1]]
        model.target_scaler_ = ScalerParams(
            mean=np.asarray(arrays["mlp_target_mean"], dtype=float),
            std=np.asarray(arrays["mlp_target_std"], dtype=float),
            constant=np.asarray(arrays["mlp_target_constant"], dtype=bool),
        )
        model.loss_curve_ = np.asarray(arrays["mlp_loss_curve"]).tolist()
        model.validation_curve_ = np.asarray(arrays["mlp_validation_curve"]).tolist()
        model.n_features_ = n_features
        return model

"""Surrogate model fitting, prediction and the versioned model container."""

import hashlib
import json
import logging
import zipfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from models import ForestHyper, GbrHyper, MlpHyper, ModelKind, ModelSpec, TreeHyper, hyper_class

from .ensembles import GradientBoosting, RandomForest
from .exceptions import CorruptModelError, FeatureMismatchError, ModelFormatError
from .mlp import MultiLayerPerceptron
from .regression_tree import RegressionTree, check_xy
from .scaler import ScalerParams, apply_scaler, fit_scaler

logger = logging.getLogger(__name__)

MODEL_FORMAT = "gridprice-model"
MODEL_FORMAT_VERSION = 1

MLP_RECIPE = {
    "activation": "relu",
    "output": "linear",
    "loss": "mse",
    "optimizer": "adam",
    "adam_betas": [0.9, 0.999],
    "adam_epsilon": 1e-8,
    "init": "he-normal",
    "target_scaling": "standard",
}

Estimator = Union[RegressionTree, RandomForest, GradientBoosting, MultiLayerPerceptron]


def training_data_hash(X: np.ndarray, Y: np.ndarray) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(X, dtype="<f8").tobytes())
    digest.update(np.ascontiguousarray(Y, dtype="<f8").tobytes())
    return digest.hexdigest()


@dataclass
class TrainedModel:
    """A fitted estimator bundled with the feature scaler it was trained behind."""

    name: str
    kind: ModelKind
    hyper: Union[TreeHyper, ForestHyper, GbrHyper, MlpHyper]
    scaler: ScalerParams
    estimator: Estimator
    seed: int
    n_features: int
    n_outputs: int
    training_data_hash: str = ""
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def loss_curve(self):
        return list(getattr(self.estimator, "loss_curve_", []))

    def manifest(self) -> Dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "name": self.name,
            "kind": self.kind.value,
            "hyper": self.hyper.model_dump(mode="json"),
            "seed": self.seed,
            "n_features": self.n_features,
            "n_outputs": self.n_outputs,
            "training_data_hash": self.training_data_hash,
            "metadata": self.metadata,
        }


# ========== Fitting ==========


def _wrap(name, kind, hyper, scaler, estimator, seed, X, Y, metadata=None) -> TrainedModel:
    model = TrainedModel(
        name=name,
        kind=kind,
        hyper=hyper,
        scaler=scaler,
        estimator=estimator,
        seed=seed,
        n_features=X.shape[1],
        n_outputs=Y.shape[1],
        training_data_hash=training_data_hash(X, Y),
        metadata=metadata or {},
    )
    logger.info(f"Fitted {name} ({kind.value}) on {X.shape[0]} rows, seed {seed}")
    return model


def fit_tree(X, Y, hyper: TreeHyper, seed: int = 0, name: str = "DTR") -> TrainedModel:
    """Fit a single regression tree; the seed is stored but unused."""
    X, Y = check_xy(X, Y)
    scaler = fit_scaler(X)
    tree = RegressionTree(
        max_leaf_nodes=hyper.max_leaf_nodes,
        min_samples_leaf=hyper.min_samples_leaf,
        min_samples_split=hyper.min_samples_split,
    ).fit(apply_scaler(scaler, X), Y)
    return _wrap(name, ModelKind.DTR, hyper, scaler, tree, seed, X, Y, {"n_leaves": tree.n_leaves})


def fit_forest(
    X, Y, hyper: ForestHyper, seed: int = 0, name: str = "RFR", n_jobs: int = 1
) -> TrainedModel:
    X, Y = check_xy(X, Y)
    scaler = fit_scaler(X)
    forest = RandomForest(
        n_estimators=hyper.n_estimators,
        max_leaf_nodes=hyper.max_leaf_nodes,
        min_samples_leaf=hyper.min_samples_leaf,
        min_samples_split=hyper.min_samples_split,
        bootstrap=hyper.bootstrap,
        seed=seed,
        n_jobs=n_jobs,
    ).fit(apply_scaler(scaler, X), Y)
    return _wrap(name, ModelKind.RFR, hyper, scaler, forest, seed, X, Y)


def fit_gbr(X, Y, hyper: GbrHyper, seed: int = 0, name: str = "GBR") -> TrainedModel:
    X, Y = check_xy(X, Y)
    scaler = fit_scaler(X)
    gbr = GradientBoosting(
        learning_rate=hyper.learning_rate,
        max_depth=hyper.max_depth,
        n_estimators=hyper.n_estimators,
        subsample=hyper.subsample,
        seed=seed,
    ).fit(apply_scaler(scaler, X), Y)
    return _wrap(name, ModelKind.GBR, hyper, scaler, gbr, seed, X, Y)


def fit_mlp(X, Y, hyper: MlpHyper, seed: int = 0, name: str = "MLP") -> TrainedModel:
    X, Y = check_xy(X, Y)
    scaler = fit_scaler(X)
    mlp = MultiLayerPerceptron(
        hidden_layers=hyper.hidden_layers,
        learning_rate=hyper.learning_rate,
        batch_size=hyper.batch_size,
        max_epochs=hyper.max_epochs,
        patience=hyper.patience,
        validation_fraction=hyper.validation_fraction,
        seed=seed,
    ).fit(apply_scaler(scaler, X), Y)
    metadata = {**MLP_RECIPE, "epochs_run": mlp.epochs_run_, "best_monitored_loss": mlp.best_loss_}
    return _wrap(name, ModelKind.MLP, hyper, scaler, mlp, seed, X, Y, metadata)


def fit_model(spec: ModelSpec, X, Y, seed: int = 0, n_jobs: int = 1) -> TrainedModel:
    """Dispatch on ``spec.kind``."""
    if spec.kind == ModelKind.DTR:
        return fit_tree(X, Y, spec.hyper, seed, name=spec.name)
    if spec.kind == ModelKind.RFR:
        return fit_forest(X, Y, spec.hyper, seed, name=spec.name, n_jobs=n_jobs)
    if spec.kind == ModelKind.GBR:
        return fit_gbr(X, Y, spec.hyper, seed, name=spec.name)
    return fit_mlp(X, Y, spec.hyper, seed, name=spec.name)


def predict(model: TrainedModel, X) -> np.ndarray:
    """
    Predict LMPs from raw (unscaled) features.

    Raises:
        FeatureMismatchError: column count differs from training
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise FeatureMismatchError(
            f"model '{model.name}' expects {model.n_features} feature columns, got {X.shape}"
        )
    return model.estimator.predict(apply_scaler(model.scaler, X))


# ========== Persistence ==========


def manifest_path(path) -> Path:
    return Path(f"{path}.manifest.json")


def save_model(model: TrainedModel, path) -> Path:
    """
    Write the model as a compressed ``.npz`` container.

    The JSON manifest is embedded and also written next to the file as
    ``<path>.manifest.json``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = model.manifest()
    arrays = {
        "manifest": np.array(json.dumps(manifest, sort_keys=True)),
        "scaler_mean": model.scaler.mean,
        "scaler_std": model.scaler.std,
        "scaler_constant": model.scaler.constant,
    }
    est = model.estimator
    if model.kind == ModelKind.DTR:
        arrays.update(est.to_arrays("tree0_"))
    elif model.kind == ModelKind.RFR:
        for t, tree in enumerate(est.trees_):
            arrays.update(tree.to_arrays(f"tree{t}_"))
    else:
        arrays.update(est.to_arrays())

    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)
    manifest_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    logger.info(f"Saved model '{model.name}' to {path}")
    return path


def _read_container(path: Path) -> Dict[str, np.ndarray]:
    try:
        with np.load(path, allow_pickle=False) as data:
            return {key: data[key] for key in data.files}
    except FileNotFoundError:
        raise
    except (zipfile.BadZipFile, zlib.error, EOFError, OSError, ValueError, KeyError) as e:
        logger.error(f"Model file {path} is unreadable: {e}")
        raise CorruptModelError(f"model file {path} is truncated or corrupt: {e}") from e


def load_model(path) -> TrainedModel:
    """
    Read a model written by ``save_model``.

    Raises:
        ModelFormatError: unknown format or version
        CorruptModelError: truncated or unreadable file
    """
    path = Path(path)
    arrays = _read_container(path)
    if "manifest" not in arrays:
        raise CorruptModelError(f"model file {path} has no manifest")
    try:
        manifest = json.loads(str(arrays["manifest"]))
    except json.JSONDecodeError as e:
        raise CorruptModelError(f"model file {path} has an unreadable manifest") from e

    if manifest.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path} is not a {MODEL_FORMAT} file")
    if manifest.get("version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path} has format version {manifest.get('version')}, "
            f"expected {MODEL_FORMAT_VERSION}"
        )

    try:
        kind = ModelKind(manifest["kind"])
        hyper = hyper_class(kind).model_validate(manifest["hyper"])
        n_features = int(manifest["n_features"])
        seed = int(manifest["seed"])
        scaler = ScalerParams(
            mean=arrays["scaler_mean"],
            std=arrays["scaler_std"],
            constant=arrays["scaler_constant"].astype(bool),
        )
        if kind == ModelKind.DTR:
            estimator = RegressionTree.from_arrays(arrays, "tree0_", n_features)
        elif kind == ModelKind.RFR:
            forest = RandomForest(
                n_estimators=hyper.n_estimators,
                max_leaf_nodes=hyper.max_leaf_nodes,
                min_samples_leaf=hyper.min_samples_leaf,
                min_samples_split=hyper.min_samples_split,
                bootstrap=hyper.bootstrap,
                seed=seed,
            )
            forest.trees_ = [
                RegressionTree.from_arrays(arrays, f"tree{t}_", n_features)
                for t in range(hyper.n_estimators)
            ]
            forest.n_features_ = n_features
            forest.n_outputs_ = int(manifest["n_outputs"])
            estimator = forest
        elif kind == ModelKind.GBR:
            estimator = GradientBoosting.from_arrays(
                arrays, n_features, hyper.learning_rate, hyper.max_depth, seed
            )
            estimator.subsample = hyper.subsample
        else:
            estimator = MultiLayerPerceptron.from_arrays(
                arrays, n_features, len(hyper.hidden_layers) + 1
            )
            estimator.learning_rate = hyper.learning_rate
            estimator.batch_size = hyper.batch_size
            estimator.seed = seed
    except (KeyError, ValueError) as e:
        raise CorruptModelError(f"model file {path} is missing or has invalid entries: {e}") from e

    return TrainedModel(
        name=manifest.get("name", kind.value),
        kind=kind,
        hyper=hyper,
        scaler=scaler,
        estimator=estimator,
        seed=seed,
        n_features=n_features,
        n_outputs=int(manifest["n_outputs"]),
        training_data_hash=manifest.get("training_data_hash", ""),
        metadata=manifest.get("metadata", {}),
    )

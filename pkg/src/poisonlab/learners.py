"""Binary classifiers of increasing capacity behind one ``train``/``predict`` surface.

Trainable families (logistic regression, ReLU MLPs) share one network
implementation: a stack of affine layers with ReLU between them and a single
sigmoid output, fitted by mini-batch SGD on mean binary cross-entropy plus
an optional L2 penalty on weight matrices. The optimiser is plain SGD with
a fixed learning rate: no momentum, no adaptive steps.

The ``zero_local_oracle`` family ignores features entirely and predicts the
majority training label of the sample's subpopulation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import TrainingError, UnsupportedOperation, ValidationError
from .mixture import Dataset
from .rng import derive_seed, substream

FAMILIES = ("logistic_regression", "mlp", "zero_local_oracle")
MODEL_FORMAT = "poisonlab-model"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class LearnerConfig:
    family: str
    hidden_layers: tuple[int, ...] = ()
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.03
    l2_penalty: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown learner family {self.family!r}")
        if bool(self.hidden_layers) != (self.family == "mlp"):
            raise ValidationError("hidden_layers must be non-empty exactly when family is 'mlp'")
        if any(h < 1 for h in self.hidden_layers):
            raise ValidationError("hidden layer widths must be positive")
        if self.trainable:
            if self.learning_rate <= 0:
                raise ValidationError("learning_rate must be positive")
            if self.epochs < 1 or self.batch_size < 1:
                raise ValidationError("epochs and batch_size must be positive")
            if self.l2_penalty < 0:
                raise ValidationError("l2_penalty must be non-negative")

    @property
    def trainable(self) -> bool:
        return self.family != "zero_local_oracle"

    @property
    def tag(self) -> str:
        if self.family == "logistic_regression":
            return "logreg"
        if self.family == "zero_local_oracle":
            return "oracle"
        return "mlp_" + "_".join(str(h) for h in self.hidden_layers)

    def layer_sizes(self, feature_dim: int) -> list[int]:
        return [feature_dim, *self.hidden_layers, 1]

    def with_seed(self, seed: int) -> "LearnerConfig":
        return LearnerConfig(**{**asdict(self), "seed": int(seed)})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_layers"] = list(self.hidden_layers)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "LearnerConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        unknown = set(d) - set(known) - {"tag"}
        if unknown:
            raise ValidationError(f"unknown learner config keys: {sorted(unknown)}")
        return cls(**known)


def param_count(config: LearnerConfig, feature_dim: int) -> int:
    if not config.trainable:
        return 0
    sizes = config.layer_sizes(feature_dim)
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


@dataclass(frozen=True, eq=False)
class TrainedModel:
    family: str
    feature_dim: int
    training_config: LearnerConfig
    weights: tuple[np.ndarray, ...] = ()
    biases: tuple[np.ndarray, ...] = ()
    oracle_table: Mapping[int, int] = field(default_factory=dict)
    fallback_label: int = 1
    loss_history: tuple[float, ...] = ()

    def __post_init__(self):
        for a in (*self.weights, *self.biases):
            a.setflags(write=False)
        object.__setattr__(self, "oracle_table", MappingProxyType(dict(self.oracle_table)))
        for W, b in zip(self.weights, self.biases):
            if W.shape[1] != b.shape[0]:
                raise ValidationError("bias length does not match layer width")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        return [W.shape for W in self.weights]

    @property
    def parameters(self) -> np.ndarray:
        return _flatten(self.weights, self.biases)

    @property
    def param_count(self) -> int:
        return int(sum(W.size + b.size for W, b in zip(self.weights, self.biases)))

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        if self.family == "zero_local_oracle":
            raise UnsupportedOperation("the oracle has no real-valued output")
        X = _check_features(X, self.feature_dim)
        return _forward(self.weights, self.biases, X)[0]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision_function(X))

    def predict(self, X: np.ndarray, subpop_ids: np.ndarray | None = None) -> np.ndarray:
        if self.family == "zero_local_oracle":
            if subpop_ids is None:
                raise ValidationError("the oracle needs subpopulation ids to predict")
            ids = np.asarray(subpop_ids, dtype=np.int64).reshape(-1)
            out = np.empty(ids.size, dtype=np.int64)
            unknown = 0
            for i, s in enumerate(ids.tolist()):
                label = self.oracle_table.get(s)
                if label is None:
                    unknown += 1
                    label = self.fallback_label
                out[i] = label
            if unknown:
                warnings.warn(
                    f"oracle saw {unknown} sample(s) from unseen subpopulations; "
                    f"used fallback label {self.fallback_label}", stacklevel=2)
            return out
        # sigmoid(z) >= 0.5  <=>  z >= 0
        return (self.decision_function(X) >= 0).astype(np.int64)

    def predict_dataset(self, dataset: Dataset) -> np.ndarray:
        return self.predict(dataset.features, dataset.subpop_ids)


def predict(model: TrainedModel, features, subpop_id: int | None = None) -> int:
    """Label for a single feature vector."""
    x = np.asarray(features, dtype=np.float64).reshape(1, -1)
    ids = None if subpop_id is None else np.array([subpop_id])
    return int(model.predict(x, ids)[0])


def predict_proba(model: TrainedModel, features) -> float:
    x = np.asarray(features, dtype=np.float64).reshape(1, -1)
    return float(model.predict_proba(x)[0])


def accuracy(model: TrainedModel, dataset: Dataset) -> float:
    return float(np.mean(model.predict_dataset(dataset) == dataset.labels))


# --- network internals -------------------------------------------------------

def _check_features(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != d:
        raise ValidationError(f"expected {d} features, got {X.shape[1]}")
    return X


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _flatten(weights, biases) -> np.ndarray:
    if not weights:
        return np.zeros(0)
    return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(weights, biases)])


def _unflatten(theta: np.ndarray, sizes: Sequence[int]):
    weights, biases, pos = [], [], 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(theta[pos:pos + a * b].reshape(a, b))
        pos += a * b
        biases.append(theta[pos:pos + b])
        pos += b
    return weights, biases


def _forward(weights, biases, X):
    """Output logits plus the per-layer activations needed for backprop."""
    acts = [X]
    a = X
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        a = z if i == last else np.maximum(z, 0.0)
        acts.append(a)
    return a[:, 0], acts


def _raw_loss(weights, biases, X, y, l2: float):
    """Loss as a numpy scalar in the inputs' precision."""
    z, _ = _forward(weights, biases, X)
    data = np.mean(np.logaddexp(0.0, z) - y * z)
    if l2:
        data = data + 0.5 * l2 * sum(np.sum(W * W) for W in weights)
    return data


def _loss(weights, biases, X, y, l2: float) -> float:
    return float(_raw_loss(weights, biases, X, y, l2))


def _gradients(weights, biases, X, y, l2: float):
    z, acts = _forward(weights, biases, X)
    delta = ((_sigmoid(z) - y) / X.shape[0])[:, None]
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gW[i] = acts[i].T @ delta
        if l2:
            gW[i] = gW[i] + l2 * weights[i]
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ weights[i].T) * (acts[i] > 0)
    return gW, gb


def _init_params(config: LearnerConfig, feature_dim: int):
    """Glorot-uniform weights, zero biases, drawn from the config's init stream."""
    rng = substream(config.seed, "train", "init")
    sizes = config.layer_sizes(feature_dim)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


# --- training ----------------------------------------------------------------

def _train_oracle(config: LearnerConfig, dataset: Dataset) -> TrainedModel:
    ids, y = dataset.subpop_ids, dataset.labels
    table = {}
    for s in np.unique(ids).tolist():
        labels = y[ids == s]
        ones = int(labels.sum())
        table[s] = int(2 * ones >= labels.size)  # ties go to 1
    fallback = int(2 * int(y.sum()) >= y.size)
    return TrainedModel("zero_local_oracle", dataset.feature_dim, config,
                        oracle_table=table, fallback_label=fallback)


def _train_network(config: LearnerConfig, dataset: Dataset) -> TrainedModel:
    X = dataset.features
    y = dataset.labels.astype(np.float64)
    n = X.shape[0]
    weights, biases = _init_params(config, dataset.feature_dim)
    shuffle = substream(config.seed, "train", "shuffle")
    lr, l2 = config.learning_rate, config.l2_penalty

    history = [_loss(weights, biases, X, y, l2)]
    for epoch in range(config.epochs):
        order = shuffle.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            gW, gb = _gradients(weights, biases, X[batch], y[batch], l2)
            for i in range(len(weights)):
                weights[i] -= lr * gW[i]
                biases[i] -= lr * gb[i]
        loss = _loss(weights, biases, X, y, l2)
        finite_params = all(np.isfinite(a).all() for a in (*weights, *biases))
        if not (np.isfinite(loss) and finite_params):
            raise TrainingError(
                f"non-finite training {'loss' if finite_params else 'parameters'} at epoch {epoch}",
                {"epoch": epoch, "loss": loss, "previous_loss": history[-1],
                 "config": config.to_dict(),
                 "max_abs_weight": max(float(np.max(np.abs(W))) for W in weights)})
        history.append(loss)

    return TrainedModel(config.family, dataset.feature_dim, config,
                        tuple(weights), tuple(biases), loss_history=tuple(history))


def train(config: LearnerConfig, dataset: Dataset) -> TrainedModel:
    if len(dataset) == 0:
        raise ValidationError("cannot train on an empty dataset")
    if config.family == "zero_local_oracle":
        return _train_oracle(config, dataset)
    return _train_network(config, dataset)


def constant_model(config: LearnerConfig, feature_dim: int) -> TrainedModel:
    """Network of the configured shape with every parameter zero (outputs 0.5)."""
    if not config.trainable:
        raise UnsupportedOperation("constant_model needs a trainable family")
    sizes = config.layer_sizes(feature_dim)
    weights = tuple(np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:]))
    biases = tuple(np.zeros(b) for b in sizes[1:])
    return TrainedModel(config.family, feature_dim, config, weights, biases)


def with_parameters(model: TrainedModel, theta: np.ndarray) -> TrainedModel:
    """Copy of ``model`` with its flat parameter vector replaced."""
    sizes = model.training_config.layer_sizes(model.feature_dim)
    theta = np.array(theta, dtype=np.float64)
    if theta.size != model.param_count:
        raise ValidationError(f"expected {model.param_count} parameters, got {theta.size}")
    W, b = _unflatten(theta, sizes)
    return TrainedModel(model.family, model.feature_dim, model.training_config,
                        tuple(w.copy() for w in W), tuple(v.copy() for v in b))


# --- gradient check ----------------------------------------------------------

@dataclass(frozen=True)
class GradientCheckReport:
    family: str
    n_params: int
    points: int
    step: float
    max_relative_error: float
    max_abs_error: float
    max_normwise_error: float
    sign_agreement: bool
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def analytic_gradient(config: LearnerConfig, theta: np.ndarray, X, y) -> np.ndarray:
    sizes = config.layer_sizes(X.shape[1])
    W, b = _unflatten(theta, sizes)
    gW, gb = _gradients(W, b, X, np.asarray(y, dtype=np.float64), config.l2_penalty)
    return _flatten(gW, gb)


def loss_at(config: LearnerConfig, theta: np.ndarray, X, y) -> float:
    W, b = _unflatten(theta, config.layer_sizes(X.shape[1]))
    return _loss(W, b, X, np.asarray(y, dtype=np.float64), config.l2_penalty)


def numeric_gradient(config: LearnerConfig, theta: np.ndarray, X, y, step: float = 1e-6) -> np.ndarray:
    """Fourth-order central differences, evaluated in extended precision.

    In float64 the difference quotient carries about ``eps * loss / step``
    (~1e-10) of rounding error, which swamps small gradient entries. With
    ``np.longdouble`` and the five-point stencil both rounding and
    truncation error sit orders of magnitude lower. On platforms where
    longdouble is plain double this degrades gracefully to float64.
    """
    sizes = config.layer_sizes(X.shape[1])
    Xe = np.asarray(X, dtype=np.longdouble)
    ye = np.asarray(y, dtype=np.longdouble)
    base = np.asarray(theta, dtype=np.longdouble)
    h = np.longdouble(step)

    def f(t):
        W, b = _unflatten(t, sizes)
        return _raw_loss(W, b, Xe, ye, config.l2_penalty)

    g = np.empty(theta.size)
    t = base.copy()
    for j in range(theta.size):
        vals = []
        for k in (2, 1, -1, -2):
            t[j] = base[j] + k * h
            vals.append(f(t))
        t[j] = base[j]
        g[j] = float((-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h))
    return g


def gradient_check(config: LearnerConfig, dataset: Dataset, tolerance: float = 1e-4,
                   points: int = 1, step: float = 1e-6, seed: int = 0) -> GradientCheckReport:
    """Compare backprop gradients with central differences at random parameters.

    Parameter points are drawn like a fresh initialisation (Glorot-uniform
    weights) with N(0, 0.1^2) biases, so the loss stays O(1).

    Relative error per coordinate is ``|g - g_fd| / max(|g|, |g_fd|, 1e-7)``.
    The floor keeps exactly-zero entries (dead ReLU units) from dividing by
    zero. The norm-wise error ``||g - g_fd|| / (||g|| + ||g_fd||)`` is
    reported alongside.
    """
    if not config.trainable:
        raise UnsupportedOperation("gradient_check needs a trainable family")
    X, y = dataset.features, dataset.labels.astype(np.float64)
    worst_rel = worst_abs = worst_norm = 0.0
    signs_ok = True
    for p in range(points):
        weights, _ = _init_params(config.with_seed(derive_seed(seed, "gradient_check", p)),
                                  dataset.feature_dim)
        bias_rng = substream(seed, "gradient_check", "bias", p)
        biases = [0.1 * bias_rng.standard_normal(W.shape[1]) for W in weights]
        theta = _flatten(weights, biases)
        g = analytic_gradient(config, theta, X, y)
        g_fd = numeric_gradient(config, theta, X, y, step)
        err = np.abs(g - g_fd)
        rel = err / np.maximum(np.maximum(np.abs(g), np.abs(g_fd)), 1e-7)
        worst_rel = max(worst_rel, float(rel.max()))
        worst_abs = max(worst_abs, float(err.max()))
        denom = np.linalg.norm(g) + np.linalg.norm(g_fd)
        worst_norm = max(worst_norm, float(np.linalg.norm(g - g_fd) / denom) if denom else 0.0)
        big = np.abs(g) > 1e-6
        signs_ok &= bool(np.all(np.sign(g[big]) == np.sign(g_fd[big])))
    return GradientCheckReport(config.family, theta.size, points, step, worst_rel, worst_abs,
                               worst_norm, signs_ok, tolerance)


# --- persistence -------------------------------------------------------------

def save_model(model: TrainedModel, path: str | Path) -> None:
    meta = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "family": model.family,
        "feature_dim": model.feature_dim,
        "config": model.training_config.to_dict(),
        "layer_shapes": [list(s) for s in model.layer_shapes],
        "oracle_table": {str(k): v for k, v in sorted(model.oracle_table.items())},
        "fallback_label": model.fallback_label,
    }
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"W{i}"] = W
        arrays[f"b{i}"] = b
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path: str | Path) -> TrainedModel:
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["meta"]))
        if meta.get("format") != MODEL_FORMAT:
            raise ValidationError(f"{path}: not a {MODEL_FORMAT} file")
        if meta["version"] > MODEL_FORMAT_VERSION:
            raise ValidationError(f"{path}: format version {meta['version']} is newer than supported")
        n_layers = len(meta["layer_shapes"])
        weights = tuple(npz[f"W{i}"].copy() for i in range(n_layers))
        biases = tuple(npz[f"b{i}"].copy() for i in range(n_layers))
    return TrainedModel(
        meta["family"], int(meta["feature_dim"]), LearnerConfig.from_dict(meta["config"]),
        weights, biases, {int(k): int(v) for k, v in meta["oracle_table"].items()},
        int(meta["fallback_label"]))

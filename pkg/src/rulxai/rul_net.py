"""Small ReLU regressor for RUL, trained with Adam on mean squared error.

Everything is plain numpy. Layers are stored input-major, so a batch ``X``
of shape (n, d) maps through ``X @ W + b``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

HIDDEN = (70, 6)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


@dataclass
class RegressorState:
    dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    adam_m: list[np.ndarray] = field(default_factory=list)
    adam_v: list[np.ndarray] = field(default_factory=list)
    step_count: int = 0

    @property
    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    @property
    def n_inputs(self) -> int:
        return self.dims[0]

    def copy(self) -> "RegressorState":
        return RegressorState(
            self.dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            [m.copy() for m in self.adam_m],
            [v.copy() for v in self.adam_v],
            self.step_count,
        )

    def __call__(self, X):
        return forward(self, X)


def init(dims, seed: int = 0) -> RegressorState:
    """Glorot-uniform weights, zero biases, zeroed Adam moments."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"layer sizes must be positive, got {dims}")
    if dims[-1] != 1:
        raise ValueError("the regressor has a single output unit")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    zeros = [np.zeros_like(p) for p in weights + biases]
    return RegressorState(dims, weights, biases, zeros, [z.copy() for z in zeros], 0)


def default_dims(n_features: int) -> tuple[int, ...]:
    return (n_features, *HIDDEN, 1)


def _check_input(state: RegressorState, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != state.n_inputs:
        raise ValueError(f"expected (n, {state.n_inputs}) input, got {X.shape}")
    return X


def _forward_cache(state: RegressorState, X: np.ndarray):
    acts = [X]
    pre = []
    h = X
    for W, b in zip(state.weights, state.biases):
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    return pre, acts


def forward(state: RegressorState, X) -> np.ndarray:
    """Predictions for a batch; every layer, including the output, is ReLU."""
    X = _check_input(state, X)
    h = X
    for W, b in zip(state.weights, state.biases):
        h = h @ W
        h += b
        np.maximum(h, 0.0, out=h)
    return h[:, 0]


def mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.size == 0:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    r = pred - target
    return float(np.mean(r * r))


def rmse(pred, target) -> float:
    return float(np.sqrt(mse(pred, target)))


def loss_and_gradients(state: RegressorState, X, y):
    """Mean squared error and its exact gradient for every weight and bias.

    Returned gradients follow ``state.params`` order (weights, then biases).
    The ReLU derivative at exactly 0 is taken as 0.
    """
    X = _check_input(state, X)
    y = np.asarray(y, dtype=float)
    pre, acts = _forward_cache(state, X)
    out = acts[-1][:, 0]
    n = X.shape[0]
    resid = out - y
    loss = float(np.mean(resid * resid))

    delta = (2.0 / n) * resid[:, None] * (pre[-1] > 0)
    gw = [None] * len(state.weights)
    gb = [None] * len(state.biases)
    for layer in range(len(state.weights) - 1, -1, -1):
        gw[layer] = acts[layer].T @ delta
        gb[layer] = delta.sum(axis=0)
        if layer:
            delta = (delta @ state.weights[layer].T) * (pre[layer - 1] > 0)
    return loss, gw + gb


def adam_step(state: RegressorState, gradients, config: TrainConfig) -> RegressorState:
    """One bias-corrected Adam update; returns a new state."""
    params = state.params
    if len(gradients) != len(params):
        raise ValueError("gradient list does not match parameters")
    n_layers = len(state.weights)
    for i, (g, p) in enumerate(zip(gradients, params)):
        if g.shape != p.shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, expected {p.shape}")
        if not np.all(np.isfinite(g)):
            kind = "weights" if i < n_layers else "biases"
            raise FloatingPointError(f"non-finite gradient in layer {i % n_layers} {kind}")

    t = state.step_count + 1
    b1, b2 = config.beta1, config.beta2
    new_params, new_m, new_v = [], [], []
    for g, p, m, v in zip(gradients, params, state.adam_m, state.adam_v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps))
        new_m.append(m)
        new_v.append(v)
    return RegressorState(
        state.dims, new_params[:n_layers], new_params[n_layers:], new_m, new_v, t
    )


def train(state: RegressorState, X, y, config: TrainConfig, X_test=None, y_test=None):
    """Mini-batch Adam training; rows are reshuffled every epoch.

    Returns the final-epoch state and a history list whose first entry
    (epoch 0) is the untrained model. ``test_rmse`` is ``None`` when no
    held-out set is given.
    """
    X = _check_input(state, X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    has_test = X_test is not None
    rng = np.random.default_rng(config.seed)

    def record(epoch, s):
        tr = rmse(forward(s, X), y)
        te = rmse(forward(s, X_test), y_test) if has_test else None
        if not np.isfinite(tr) or (te is not None and not np.isfinite(te)):
            raise TrainingDivergedError(f"RMSE became non-finite at epoch {epoch}")
        return {"epoch": epoch, "train_rmse": tr, "test_rmse": te}

    history = [record(0, state)]
    n = X.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            _, grads = loss_and_gradients(state, X[batch], y[batch])
            state = adam_step(state, grads, config)
        history.append(record(epoch, state))
        log.debug("epoch %d train %.4f test %s", epoch, history[-1]["train_rmse"],
                  history[-1]["test_rmse"])
    return state, history


def predict_rul(state: RegressorState, X) -> np.ndarray:
    return forward(state, X)


def save_model(path, state: RegressorState, extra: dict | None = None) -> None:
    """JSON dump; Python float repr makes the round trip exact."""
    doc = {
        "dims": list(state.dims),
        "weights": [w.tolist() for w in state.weights],
        "biases": [b.tolist() for b in state.biases],
        "step_count": state.step_count,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc))


def load_model(path) -> tuple[RegressorState, dict]:
    doc = json.loads(Path(path).read_text())
    weights = [np.array(w, dtype=float) for w in doc.pop("weights")]
    biases = [np.array(b, dtype=float) for b in doc.pop("biases")]
    dims = tuple(doc.pop("dims"))
    zeros = [np.zeros_like(p) for p in weights + biases]
    state = RegressorState(dims, weights, biases, zeros, [z.copy() for z in zeros],
                           doc.pop("step_count"))
    return state, doc


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)

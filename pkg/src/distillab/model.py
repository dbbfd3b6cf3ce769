"""Feed-forward logit model with exact hand-derived gradients.

Hidden layers use rectified-linear activations (subgradient 0 at 0), the
output layer is affine. Forward and backward passes are straight-line
matrix arithmetic so they can be verified against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "MlpModel",
    "init_mlp",
    "forward_logits",
    "predict",
    "backward",
    "softmax_with_temperature",
    "softmax_per_class_temperature",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass
class MlpModel:
    """Layer dimensions plus per-layer weight matrices and bias vectors.

    weights[i] has shape (layer_dims[i+1], layer_dims[i]); the forward
    pass computes x @ W.T + b per layer.
    """

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        if any(d < 1 for d in dims):
            raise ValueError("all layer dims must be positive")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("one weight matrix and bias vector per layer expected")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]):
                raise ValueError(f"weights[{i}] has shape {w.shape}, expected {(dims[i+1], dims[i])}")
            if b.shape != (dims[i + 1],):
                raise ValueError(f"biases[{i}] has shape {b.shape}, expected {(dims[i+1],)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")
        object.__setattr__(self, "layer_dims", dims)

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_dims=self.layer_dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_mlp(layer_dims, seed: int) -> MlpModel:
    """He-initialised model: weights scaled by sqrt(2/fan_in), zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    rng = np.random.default_rng([seed, 23])
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(scale * rng.standard_normal((fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return MlpModel(layer_dims=dims, weights=weights, biases=biases)


def _forward_cached(model: MlpModel, features: np.ndarray):
    """Forward pass keeping per-layer inputs and pre-activations for backprop."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.layer_dims[0]:
        raise ValueError(
            f"features shape {x.shape} incompatible with input dim {model.layer_dims[0]}"
        )
    inputs = [x]
    pre_acts = []
    h = x
    last = model.num_layers - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        pre_acts.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        if i != last:
            inputs.append(h)
    return h, inputs, pre_acts


def forward_logits(model: MlpModel, features) -> np.ndarray:
    """Logit matrix [N x L] for a feature matrix [N x D]."""
    logits, _, _ = _forward_cached(model, features)
    return logits


def predict(model: MlpModel, features) -> np.ndarray:
    """Per-row argmax class; ties break toward the smallest class index."""
    return np.argmax(forward_logits(model, features), axis=1)


def backward(
    model: MlpModel, features, dloss_dlogits
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact chain-rule parameter gradients given upstream dloss/dlogits.

    Returns one (dW, db) pair per layer, in layer order.
    """
    _, inputs, pre_acts = _forward_cached(model, features)
    delta = np.asarray(dloss_dlogits, dtype=np.float64)
    if delta.shape != pre_acts[-1].shape:
        raise ValueError(
            f"dloss_dlogits shape {delta.shape} must match logits shape {pre_acts[-1].shape}"
        )
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * model.num_layers  # type: ignore
    for i in range(model.num_layers - 1, -1, -1):
        grads[i] = (delta.T @ inputs[i], delta.sum(axis=0))
        if i > 0:
            delta = (delta @ model.weights[i]) * (pre_acts[i - 1] > 0.0)
    return grads


def softmax_with_temperature(logits, temperature: float) -> np.ndarray:
    """Row-wise softmax of logits/T, stabilised by row-max subtraction."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_per_class_temperature(logits, labels, temps) -> np.ndarray:
    """Softmax where row n is scaled by 1/temps[labels[n]] before normalising."""
    temps = np.asarray(temps, dtype=np.float64)
    if np.any(temps <= 0):
        raise ValueError("all temperatures must be positive")
    labels = np.asarray(labels, dtype=np.int64)
    z = np.asarray(logits, dtype=np.float64) / temps[labels][:, None]
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


_FLOAT_FMT = "%.17g"


def save_checkpoint(model: MlpModel, path: str | Path) -> None:
    """Write a text checkpoint: layer dims plus row-major decimal parameters."""
    lines = ["mlp-checkpoint v1", "dims " + " ".join(str(d) for d in model.layer_dims)]
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"W{i} " + " ".join(_FLOAT_FMT % v for v in w.ravel()))
        lines.append(f"b{i} " + " ".join(_FLOAT_FMT % v for v in b))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_checkpoint(path: str | Path) -> MlpModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "mlp-checkpoint v1":
        raise ValueError(f"{path}: not a model checkpoint")
    dims = tuple(int(d) for d in lines[1].split()[1:])
    weights, biases = [], []
    for i in range(len(dims) - 1):
        w_cells = lines[2 + 2 * i].split()[1:]
        b_cells = lines[3 + 2 * i].split()[1:]
        weights.append(
            np.asarray([float(v) for v in w_cells], dtype=np.float64).reshape(
                dims[i + 1], dims[i]
            )
        )
        biases.append(np.asarray([float(v) for v in b_cells], dtype=np.float64))
    return MlpModel(layer_dims=dims, weights=weights, biases=biases)

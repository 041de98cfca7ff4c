"""Three-layer feedforward binary classifier with analytic backprop, in plain numpy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Probabilities are clamped inside the loss so log() never sees 0 or 1.
PROB_EPS = 1e-7


@dataclass(frozen=True)
class ModelParams:
    """Dense parameters of the d -> h1 -> h2 -> 1 network.

    Weights are stored row-major (inputs x outputs); the output layer is a
    plain vector plus scalar bias. Instances are immutable: training steps
    return new objects.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: float

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dims(self) -> tuple[int, int]:
        return self.w1.shape[1], self.w2.shape[1]

    def check_finite(self) -> None:
        for name, arr in (("w1", self.w1), ("b1", self.b1), ("w2", self.w2),
                          ("b2", self.b2), ("w3", self.w3)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")
        if not np.isfinite(self.b3):
            raise ValueError("non-finite values in b3")


# Gradients are shape-congruent with the parameters they refer to.
Gradient = ModelParams


def init_params(input_dim: int, seed: int, hidden_dims: tuple[int, int] = (64, 32)) -> ModelParams:
    """Initialize weights and biases uniform in +-sqrt(6/fan_in), per layer.

    The Glorot-style sqrt(6) bound keeps the activation scale roughly
    constant through the ReLU stack; with the tighter sqrt(1/fan_in) bound
    the signal attenuates so much per layer that small-step SGD cannot leave
    the majority-class regime within the round budget used here. Biases
    start at zero so the initial outputs sit near one half.
    """
    if input_dim < 1:
        raise ValueError(f"input_dim must be >= 1, got {input_dim}")
    h1, h2 = hidden_dims
    rng = np.random.default_rng((seed, 0x1417))
    dims = [(input_dim, h1), (h1, h2), (h2, 1)]
    mats = []
    for fan_in, fan_out in dims:
        bound = np.sqrt(6.0 / fan_in)
        mats.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    w1, w2, w3 = mats
    return ModelParams(w1=w1, b1=np.zeros(h1), w2=w2, b2=np.zeros(h2),
                       w3=w3[:, 0], b3=0.0)


def zeros_like_params(p: ModelParams) -> ModelParams:
    return ModelParams(
        w1=np.zeros_like(p.w1), b1=np.zeros_like(p.b1),
        w2=np.zeros_like(p.w2), b2=np.zeros_like(p.b2),
        w3=np.zeros_like(p.w3), b3=0.0,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_cache(p: ModelParams, X: np.ndarray):
    if X.ndim != 2 or X.shape[1] != p.input_dim:
        raise ValueError(
            f"feature matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"model expects {p.input_dim}"
        )
    z1 = X @ p.w1 + p.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ p.w2 + p.b2
    h2 = np.maximum(z2, 0.0)
    z3 = h2 @ p.w3 + p.b3
    return z1, h1, z2, h2, _sigmoid(z3)


def forward(p: ModelParams, X: np.ndarray) -> np.ndarray:
    """Predicted probabilities in (0,1), one per row of X."""
    return _forward_cache(p, X)[4]


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy; probabilities clamped away from {0,1}."""
    if probs.shape != labels.shape:
        raise ValueError(f"length mismatch: {probs.shape} probs vs {labels.shape} labels")
    q = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(labels * np.log(q) + (1.0 - labels) * np.log1p(-q)))


def backward(
    p: ModelParams,
    X: np.ndarray,
    labels: np.ndarray,
    extra_output_grad: np.ndarray | None = None,
) -> Gradient:
    """Analytic gradient of mean BCE plus an optional extra output term.

    When `extra_output_grad` is given, the differentiated objective is
    mean_bce(probs, labels) + dot(extra_output_grad, probs); the extra vector
    is the hook through which callers inject additional per-sample pressure
    on the output probabilities.
    """
    n = X.shape[0]
    if labels.shape[0] != n:
        raise ValueError(f"{n} rows but {labels.shape[0]} labels")
    if extra_output_grad is not None and extra_output_grad.shape[0] != n:
        raise ValueError(f"{n} rows but {extra_output_grad.shape[0]} extra gradient entries")
    z1, h1, z2, h2, probs = _forward_cache(p, X)
    # dBCE/dz3 simplifies to (p - y)/n; the clamp in the loss zeroes the
    # gradient for samples sitting outside the clamp interval.
    inside = (probs > PROB_EPS) & (probs < 1.0 - PROB_EPS)
    dz3 = np.where(inside, probs - labels, 0.0) / n
    if extra_output_grad is not None:
        dz3 = dz3 + extra_output_grad * probs * (1.0 - probs)
    dw3 = h2.T @ dz3
    db3 = float(dz3.sum())
    dh2 = np.outer(dz3, p.w3)
    dh2[z2 <= 0.0] = 0.0
    dw2 = h1.T @ dh2
    db2 = dh2.sum(axis=0)
    dh1 = dh2 @ p.w2.T
    dh1[z1 <= 0.0] = 0.0
    dw1 = X.T @ dh1
    db1 = dh1.sum(axis=0)
    return ModelParams(w1=dw1, b1=db1, w2=dw2, b2=db2, w3=dw3, b3=db3)


def sgd_step(p: ModelParams, g: Gradient, lr: float) -> ModelParams:
    """One gradient-descent step: p - lr * g, elementwise."""
    g.check_finite()
    return ModelParams(
        w1=p.w1 - lr * g.w1, b1=p.b1 - lr * g.b1,
        w2=p.w2 - lr * g.w2, b2=p.b2 - lr * g.b2,
        w3=p.w3 - lr * g.w3, b3=p.b3 - lr * g.b3,
    )


def flatten(p: ModelParams) -> np.ndarray:
    """Serialize to a flat vector: w1 row-major, b1, w2 row-major, b2, w3, b3.

    This ordering is a fixed contract; aggregation rules operate on these
    vectors and unflatten() must round-trip bit-exactly.
    """
    return np.concatenate([
        p.w1.ravel(), p.b1, p.w2.ravel(), p.b2, p.w3, np.array([p.b3]),
    ])


def unflatten(vec: np.ndarray, like: ModelParams) -> ModelParams:
    d, (h1, h2) = like.input_dim, like.hidden_dims
    sizes = [d * h1, h1, h1 * h2, h2, h2, 1]
    if vec.shape != (sum(sizes),):
        raise ValueError(f"vector of length {vec.shape} does not match model of size {sum(sizes)}")
    parts = np.split(vec, np.cumsum(sizes)[:-1])
    return ModelParams(
        w1=parts[0].reshape(d, h1), b1=parts[1],
        w2=parts[2].reshape(h1, h2), b2=parts[3],
        w3=parts[4], b3=float(parts[5][0]),
    )


def add_delta(p: ModelParams, delta: np.ndarray) -> ModelParams:
    """Apply a flat update vector to parameters (server-side model step)."""
    return unflatten(flatten(p) + delta, like=p)

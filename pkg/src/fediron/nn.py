"""Dense feedforward engine in double precision.

Seeded Xavier initialization, softmax cross-entropy backprop with an optional
proximal penalty, momentum SGD and Adam, and deterministic mini-batch
training. Models are value objects: every operation returns new arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "softmax", "identity")

PROB_FLOOR = 1e-12  # clamp applied to predicted probabilities before log


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str


def validate_specs(specs) -> tuple[LayerSpec, ...]:
    specs = tuple(specs)
    if not specs:
        raise ValueError("model needs at least one layer")
    for i, s in enumerate(specs):
        if s.activation not in ACTIVATIONS:
            raise ValueError(f"layer {i}: unknown activation {s.activation!r}")
        if s.in_dim < 1 or s.out_dim < 1:
            raise ValueError(f"layer {i}: dimensions must be positive")
        if i > 0 and specs[i - 1].out_dim != s.in_dim:
            raise ValueError(
                f"layer {i}: in_dim {s.in_dim} does not chain with previous out_dim {specs[i - 1].out_dim}"
            )
        if s.activation == "softmax" and i != len(specs) - 1:
            raise ValueError(f"layer {i}: softmax is reserved for the final layer")
    return specs


@dataclass
class ModelParams:
    specs: tuple[LayerSpec, ...]
    weights: list[np.ndarray]  # per layer, out_dim x in_dim
    biases: list[np.ndarray]  # per layer, out_dim

    def copy(self) -> "ModelParams":
        return ModelParams(self.specs, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.specs[0].in_dim,) + tuple(s.out_dim for s in self.specs)

    @property
    def n_layers(self) -> int:
        return len(self.specs)

    def arrays(self):
        """Yield w0, b0, w1, b1, ... in layer order."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b


def make_params(specs, weights, biases) -> ModelParams:
    specs = validate_specs(specs)
    if len(weights) != len(specs) or len(biases) != len(specs):
        raise ValueError("weights/biases count does not match layer specs")
    for i, (s, w, b) in enumerate(zip(specs, weights, biases)):
        if w.shape != (s.out_dim, s.in_dim):
            raise ValueError(f"layer {i}: weight shape {w.shape} != {(s.out_dim, s.in_dim)}")
        if b.shape != (s.out_dim,):
            raise ValueError(f"layer {i}: bias shape {b.shape} != {(s.out_dim,)}")
    return ModelParams(specs, [np.asarray(w, dtype=np.float64) for w in weights],
                       [np.asarray(b, dtype=np.float64) for b in biases])


def map_params(fn, *models: ModelParams) -> ModelParams:
    """Apply fn elementwise across the aligned arrays of one or more models."""
    first = models[0]
    weights = [fn(*(m.weights[k] for m in models)) for k in range(first.n_layers)]
    biases = [fn(*(m.biases[k] for m in models)) for k in range(first.n_layers)]
    return ModelParams(first.specs, weights, biases)


def zeros_like_params(model: ModelParams) -> ModelParams:
    return map_params(np.zeros_like, model)


def params_equal(a: ModelParams, b: ModelParams) -> bool:
    if a.specs != b.specs:
        return False
    return all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))


def init_xavier(specs, seed: int) -> ModelParams:
    """Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases."""
    specs = validate_specs(specs)
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for s in specs:
        a = math.sqrt(6.0 / (s.in_dim + s.out_dim))
        weights.append(rng.uniform(-a, a, size=(s.out_dim, s.in_dim)))
        biases.append(np.zeros(s.out_dim, dtype=np.float64))
    return ModelParams(specs, weights, biases)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return _sigmoid(z)
    if kind == "softmax":
        return _softmax(z)
    return z


def _activation_grad(a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (a > 0.0).astype(np.float64)
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "identity":
        return np.ones_like(a)
    raise ValueError(f"no elementwise gradient for activation {kind!r}")


def forward(model: ModelParams, batch) -> tuple[list[np.ndarray], np.ndarray]:
    """Run the batch through every layer.

    Returns (activations, output) where activations[0] is the input batch and
    activations[k] is the post-activation output of layer k; the final entry
    is the network output (class probabilities when the head is softmax).
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"batch must be 2-d, got shape {x.shape}")
    if x.shape[1] != model.specs[0].in_dim:
        raise ValueError(f"batch has {x.shape[1]} features, model expects {model.specs[0].in_dim}")
    acts = [x]
    for w, b, spec in zip(model.weights, model.biases, model.specs):
        z = acts[-1] @ w.T + b
        acts.append(_activate(z, spec.activation))
    return acts, acts[-1]


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean negative log probability of the true class."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = probs.shape
    if labels.shape != (n,):
        raise ValueError(f"{labels.shape} labels for {n} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"label out of range [0, {c})")
    picked = probs[np.arange(n), labels]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def backward(model: ModelParams, activations: list[np.ndarray], labels,
             prox_mu: float = 0.0, prox_anchor: ModelParams | None = None) -> ModelParams:
    """Exact gradients of mean cross-entropy w.r.t. every weight and bias.

    Assumes a softmax head (the output delta is probs minus one-hot, divided
    by batch size). With prox_mu > 0 adds mu * (param - anchor) to every
    gradient.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_layers = model.n_layers
    if len(activations) != n_layers + 1:
        raise ValueError(f"{len(activations)} activations for {n_layers} layers; rerun forward")
    if model.specs[-1].activation != "softmax":
        raise ValueError("backward requires a softmax output layer")
    probs = activations[-1]
    n = probs.shape[0]
    if labels.shape != (n,):
        raise ValueError(f"{labels.shape} labels for activations of {n} rows")
    for k, spec in enumerate(model.specs):
        if activations[k + 1].shape != (n, spec.out_dim):
            raise ValueError(f"activation {k + 1} has shape {activations[k + 1].shape}, "
                             f"expected {(n, spec.out_dim)}; stale forward pass")

    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grad_w: list[np.ndarray] = [np.empty(0)] * n_layers
    grad_b: list[np.ndarray] = [np.empty(0)] * n_layers
    for k in range(n_layers - 1, -1, -1):
        grad_w[k] = delta.T @ activations[k]
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k]) * _activation_grad(
                activations[k], model.specs[k - 1].activation)

    if prox_anchor is not None and prox_mu > 0.0:
        for k in range(n_layers):
            grad_w[k] = grad_w[k] + prox_mu * (model.weights[k] - prox_anchor.weights[k])
            grad_b[k] = grad_b[k] + prox_mu * (model.biases[k] - prox_anchor.biases[k])

    return ModelParams(model.specs, grad_w, grad_b)


@dataclass(frozen=True)
class SgdSpec:
    lr: float = 0.01
    momentum: float = 0.9

    def __post_init__(self) -> None:
        if not self.lr >= 0.0:
            raise ValueError("learning rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass(frozen=True)
class AdamSpec:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if not self.lr >= 0.0:
            raise ValueError("learning rate must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")


@dataclass
class OptimizerState:
    velocity: list[np.ndarray] | None = None  # sgd buffers, flat w0,b0,w1,b1 order
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None
    t: int = 0


def init_optimizer_state(opt, params: ModelParams) -> OptimizerState:
    zeros = [np.zeros_like(a) for a in params.arrays()]
    if isinstance(opt, SgdSpec):
        return OptimizerState(velocity=zeros)
    if isinstance(opt, AdamSpec):
        return OptimizerState(m=zeros, v=[z.copy() for z in zeros], t=0)
    raise TypeError(f"unknown optimizer spec {type(opt).__name__}")


def _rebuild(specs, flat: list[np.ndarray]) -> ModelParams:
    weights = flat[0::2]
    biases = flat[1::2]
    return ModelParams(specs, weights, biases)


def optimizer_step(state: OptimizerState, params: ModelParams, grads: ModelParams, opt) -> tuple[ModelParams, OptimizerState]:
    p_flat = list(params.arrays())
    g_flat = list(grads.arrays())
    if isinstance(opt, SgdSpec):
        new_vel = [opt.momentum * v + g for v, g in zip(state.velocity, g_flat)]
        new_p = [p - opt.lr * v for p, v in zip(p_flat, new_vel)]
        return _rebuild(params.specs, new_p), OptimizerState(velocity=new_vel)
    if isinstance(opt, AdamSpec):
        t = state.t + 1
        new_m = [opt.beta1 * m + (1.0 - opt.beta1) * g for m, g in zip(state.m, g_flat)]
        new_v = [opt.beta2 * v + (1.0 - opt.beta2) * g * g for v, g in zip(state.v, g_flat)]
        c1 = 1.0 - opt.beta1 ** t
        c2 = 1.0 - opt.beta2 ** t
        new_p = [p - opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
                 for p, m, v in zip(p_flat, new_m, new_v)]
        return _rebuild(params.specs, new_p), OptimizerState(m=new_m, v=new_v, t=t)
    raise TypeError(f"unknown optimizer spec {type(opt).__name__}")


@dataclass
class TrainConfig:
    optimizer: SgdSpec | AdamSpec = field(default_factory=SgdSpec)
    batch_size: int = 128
    epochs: int = 2
    seed: int = 0
    prox_mu: float = 0.0
    prox_anchor: ModelParams | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.prox_mu < 0.0:
            raise ValueError("prox_mu must be non-negative")


def train_local(model: ModelParams, x, y, config: TrainConfig) -> tuple[ModelParams, list[float]]:
    """Seeded mini-batch training; returns (new params, per-epoch mean loss)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if y.shape != (n,):
        raise ValueError(f"{y.shape} labels for {n} rows")
    rng = np.random.default_rng(config.seed)
    params = model.copy()
    state = init_optimizer_state(config.optimizer, params)
    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            acts, probs = forward(params, x[idx])
            batch_losses.append(cross_entropy(probs, y[idx]))
            grads = backward(params, acts, y[idx],
                             prox_mu=config.prox_mu, prox_anchor=config.prox_anchor)
            params, state = optimizer_step(state, params, grads, config.optimizer)
        epoch_losses.append(float(np.mean(batch_losses)))
    return params, epoch_losses


def predict(model: ModelParams, x, batch_size: int = 8192) -> np.ndarray:
    """Class ids by argmax of the output layer, evaluated in chunks."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[0], dtype=np.int64)
    for start in range(0, x.shape[0], batch_size):
        _, probs = forward(model, x[start:start + batch_size])
        out[start:start + batch_size] = probs.argmax(axis=1)
    return out


def dnn_layer_specs(n_features: int = 38, n_classes: int = 10) -> tuple[LayerSpec, ...]:
    """ReLU stack 128:128:64 with a softmax head."""
    return (
        LayerSpec(n_features, 128, "relu"),
        LayerSpec(128, 128, "relu"),
        LayerSpec(128, 64, "relu"),
        LayerSpec(64, n_classes, "softmax"),
    )


def dbn_layer_specs(n_features: int = 38, n_classes: int = 10,
                    hidden: tuple[int, ...] = (100, 150, 200, 50)) -> tuple[LayerSpec, ...]:
    """Sigmoid stack 100:150:200:50 with a softmax head; mirrors the shape a
    pretrained belief-network stack converts into."""
    dims = (n_features,) + tuple(hidden)
    specs = [LayerSpec(dims[i], dims[i + 1], "sigmoid") for i in range(len(hidden))]
    specs.append(LayerSpec(dims[-1], n_classes, "softmax"))
    return tuple(specs)


def preset_layer_specs(preset: str, n_features: int = 38, n_classes: int = 10) -> tuple[LayerSpec, ...]:
    if preset == "dnn":
        return dnn_layer_specs(n_features, n_classes)
    if preset == "dbn":
        return dbn_layer_specs(n_features, n_classes)
    raise ValueError(f"unknown model preset {preset!r}")


def default_optimizer(preset: str):
    if preset == "dnn":
        return SgdSpec()
    if preset == "dbn":
        return AdamSpec()
    raise ValueError(f"unknown model preset {preset!r}")

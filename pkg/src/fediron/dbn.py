"""Restricted Boltzmann machines and their greedy stack.

Each RBM is trained by single-step contrastive divergence with momentum.
The first layer of a stack uses Gaussian visible units (for standardized
real inputs, reconstructed mean-field); deeper layers are Bernoulli. Hidden
probabilities, not samples, feed the next layer during greedy pretraining.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import LayerSpec, ModelParams, _sigmoid, init_xavier, make_params
from .seeding import derive_seed

VISIBLE_KINDS = ("gaussian", "bernoulli")


@dataclass
class Rbm:
    w: np.ndarray  # hidden x visible
    b_visible: np.ndarray
    b_hidden: np.ndarray
    visible_kind: str

    def __post_init__(self) -> None:
        if self.visible_kind not in VISIBLE_KINDS:
            raise ValueError(f"unknown visible unit kind {self.visible_kind!r}")
        nh, nv = self.w.shape
        if self.b_visible.shape != (nv,) or self.b_hidden.shape != (nh,):
            raise ValueError("bias shapes do not match the weight matrix")

    @property
    def n_visible(self) -> int:
        return self.w.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w.shape[0]

    def copy(self) -> "Rbm":
        return Rbm(self.w.copy(), self.b_visible.copy(), self.b_hidden.copy(), self.visible_kind)


@dataclass
class RbmVelocity:
    w: np.ndarray
    b_visible: np.ndarray
    b_hidden: np.ndarray


def init_rbm(n_visible: int, n_hidden: int, visible_kind: str, seed: int) -> Rbm:
    """Xavier-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    a = math.sqrt(6.0 / (n_visible + n_hidden))
    w = rng.uniform(-a, a, size=(n_hidden, n_visible))
    return Rbm(w, np.zeros(n_visible), np.zeros(n_hidden), visible_kind)


def zero_velocity(rbm: Rbm) -> RbmVelocity:
    return RbmVelocity(np.zeros_like(rbm.w), np.zeros_like(rbm.b_visible), np.zeros_like(rbm.b_hidden))


def hidden_probs(rbm: Rbm, v) -> np.ndarray:
    """p(h=1 | v) = sigmoid(v W^T + b_h), row per sample."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != rbm.n_visible:
        raise ValueError(f"visible batch shape {v.shape} does not match {rbm.n_visible} visible units")
    return _sigmoid(v @ rbm.w.T + rbm.b_hidden)


def positive_stats(rbm: Rbm, v: np.ndarray) -> np.ndarray:
    """Data-phase statistics E[h v^T] under mean-field hidden probabilities,
    averaged over the batch."""
    ph = hidden_probs(rbm, v)
    return ph.T @ v / v.shape[0]


def _reconstruct(rbm: Rbm, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    mean = h @ rbm.w + rbm.b_visible
    if rbm.visible_kind == "gaussian":
        return mean  # mean-field reconstruction, unit variance
    p = _sigmoid(mean)
    return (rng.random(p.shape) < p).astype(np.float64)


def gibbs_step(rbm: Rbm, batch: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One sampled hidden state and the visible reconstruction it produces.

    Returns (hidden_probs_on_data, v_reconstructed, hidden_probs_on_recon).
    """
    rng = np.random.default_rng(seed)
    ph = hidden_probs(rbm, batch)
    h = (rng.random(ph.shape) < ph).astype(np.float64)
    v1 = _reconstruct(rbm, h, rng)
    ph1 = hidden_probs(rbm, v1)
    return ph, v1, ph1


def reconstruction_error(rbm: Rbm, batch, seed: int) -> float:
    """Mean squared error of a single Gibbs reconstruction, no update."""
    batch = np.asarray(batch, dtype=np.float64)
    _, v1, _ = gibbs_step(rbm, batch, seed)
    return float(np.mean((batch - v1) ** 2))


def cd1_update(rbm: Rbm, batch, lr: float, momentum: float, seed: int,
               velocity: RbmVelocity) -> tuple[Rbm, RbmVelocity, float]:
    """One contrastive-divergence step with a single Gibbs chain.

    Gradient is (data statistics - reconstruction statistics), batch-averaged,
    accumulated into a momentum velocity and applied as an ascent step.
    """
    batch = np.asarray(batch, dtype=np.float64)
    n = batch.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    ph, v1, ph1 = gibbs_step(rbm, batch, seed)

    grad_w = (ph.T @ batch - ph1.T @ v1) / n
    grad_bv = np.mean(batch - v1, axis=0)
    grad_bh = np.mean(ph - ph1, axis=0)

    vel = RbmVelocity(
        momentum * velocity.w + grad_w,
        momentum * velocity.b_visible + grad_bv,
        momentum * velocity.b_hidden + grad_bh,
    )
    updated = Rbm(
        rbm.w + lr * vel.w,
        rbm.b_visible + lr * vel.b_visible,
        rbm.b_hidden + lr * vel.b_hidden,
        rbm.visible_kind,
    )
    err = float(np.mean((batch - v1) ** 2))
    return updated, vel, err


@dataclass
class DbnStack:
    rbms: list[Rbm]

    def __post_init__(self) -> None:
        for k in range(1, len(self.rbms)):
            if self.rbms[k].n_visible != self.rbms[k - 1].n_hidden:
                raise ValueError(f"stack layer {k} does not chain: "
                                 f"{self.rbms[k - 1].n_hidden} hidden feeds {self.rbms[k].n_visible} visible")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.rbms[0].n_visible,) + tuple(r.n_hidden for r in self.rbms)


def pretrain_stack(dims, data, epochs: int, lr: float, momentum: float, seed: int,
                   batch_size: int = 128) -> DbnStack:
    """Greedy layerwise CD-1 pretraining.

    dims is the visible-to-top chain, e.g. (38, 100, 150, 200, 50). Layer k
    trains on the hidden probabilities of the layers below it; layers below
    are never touched again. The first layer gets Gaussian visible units,
    the rest Bernoulli.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise ValueError("stack needs at least one RBM (two dims)")
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != dims[0]:
        raise ValueError(f"data has {data.shape[1]} columns, stack expects {dims[0]}")

    rbms: list[Rbm] = []
    current = data
    n = data.shape[0]
    for k in range(len(dims) - 1):
        kind = "gaussian" if k == 0 else "bernoulli"
        rbm = init_rbm(dims[k], dims[k + 1], kind, derive_seed(seed, 101, k))
        vel = zero_velocity(rbm)
        for epoch in range(epochs):
            rng = np.random.default_rng(derive_seed(seed, 211, k, epoch))
            order = rng.permutation(n)
            for bi, start in enumerate(range(0, n, batch_size)):
                idx = order[start:start + batch_size]
                rbm, vel, _ = cd1_update(rbm, current[idx], lr, momentum,
                                         derive_seed(seed, 307, k, epoch, bi), vel)
        rbms.append(rbm)
        if k < len(dims) - 2:
            current = hidden_probs(rbm, current)
    return DbnStack(rbms)


def to_classifier(stack: DbnStack, n_classes: int, seed: int) -> ModelParams:
    """Unroll the stack into a sigmoid feedforward net and add a fresh
    Xavier-initialized softmax head. Pretrained weights are copied bit-exact."""
    specs = [LayerSpec(r.n_visible, r.n_hidden, "sigmoid") for r in stack.rbms]
    top = stack.rbms[-1].n_hidden
    head_spec = LayerSpec(top, n_classes, "softmax")
    head = init_xavier((head_spec,), seed)
    weights = [r.w.copy() for r in stack.rbms] + [head.weights[0]]
    biases = [r.b_hidden.copy() for r in stack.rbms] + [head.biases[0]]
    return make_params(tuple(specs) + (head_spec,), weights, biases)

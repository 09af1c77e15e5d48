"""Federated orchestration: broadcast, local training, aggregation, rounds.

All clients participate every round. Per-client seeds derive from
(master seed, client id, round), and aggregation always runs in client-id
order, so results are bit-identical whether clients train serially or in a
thread pool.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dbn as dbn_mod
from .data import PreparedClient
from .metrics import MetricsReport, evaluate_predictions
from .nn import (AdamSpec, ModelParams, SgdSpec, TrainConfig, init_xavier, map_params,
                 predict, preset_layer_specs, train_local, zeros_like_params)
from .seeding import derive_seed

AGGREGATION_KINDS = ("fedavg", "fedprox", "fedyogi")


@dataclass(frozen=True)
class AggregationConfig:
    kind: str = "fedavg"
    mu: float = 0.01  # fedprox proximal coefficient
    eta: float = 0.01  # fedyogi server learning rate
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 0.001

    def __post_init__(self) -> None:
        if self.kind not in AGGREGATION_KINDS:
            raise ValueError(f"unknown aggregation kind {self.kind!r}")
        for name in ("mu", "eta", "beta1", "beta2", "tau"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"aggregation hyperparameter {name} must be finite")
        if self.mu < 0.0:
            raise ValueError("mu must be non-negative")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    params: ModelParams
    n_samples: int

    def __post_init__(self) -> None:
        if self.n_samples <= 0:
            raise ValueError(f"client {self.client_id} reports {self.n_samples} samples")


@dataclass
class ServerState:
    params: ModelParams
    yogi_m: ModelParams | None = None
    yogi_v: ModelParams | None = None
    round: int = 0


@dataclass
class RoundReport:
    round: int
    client_losses: dict[int, float]
    metrics: MetricsReport | None
    wall_time_s: float


def init_server_state(params: ModelParams, agg: AggregationConfig) -> ServerState:
    if agg.kind != "fedyogi":
        return ServerState(params=params)
    m = zeros_like_params(params)
    v = map_params(lambda a: np.full_like(a, agg.tau ** 2), params)
    return ServerState(params=params, yogi_m=m, yogi_v=v)


def _sorted_updates(updates: list[ClientUpdate]) -> list[ClientUpdate]:
    ids = [u.client_id for u in updates]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate client ids in update list")
    return sorted(updates, key=lambda u: u.client_id)


def aggregate_fedavg(updates: list[ClientUpdate]) -> ModelParams:
    """Elementwise sample-count-weighted mean of the client parameters."""
    if not updates:
        raise ValueError("no client updates to aggregate")
    updates = _sorted_updates(updates)
    first = updates[0].params
    for u in updates[1:]:
        if u.params.specs != first.specs:
            raise ValueError(f"client {u.client_id} parameters do not match the global shape")
    if len(updates) == 1:
        return first.copy()
    total = float(sum(u.n_samples for u in updates))
    out = zeros_like_params(first)
    for u in updates:
        w = u.n_samples / total
        out = map_params(lambda acc, p, w=w: acc + w * p, out, u.params)
    return out


def aggregate_fedyogi(state: ServerState, updates: list[ClientUpdate],
                      agg: AggregationConfig) -> ServerState:
    """Adaptive server update on the averaged client delta.

    delta = weighted_mean(w_i) - x
    m <- beta1 m + (1 - beta1) delta
    v <- v - (1 - beta2) delta^2 sign(v - delta^2)
    x <- x + eta m / (sqrt(v) + tau)
    """
    if state.yogi_m is None or state.yogi_v is None:
        raise ValueError("server state is missing the fedyogi accumulators")
    mean = aggregate_fedavg(updates)
    delta = map_params(lambda a, b: a - b, mean, state.params)
    m = map_params(lambda m_, d: agg.beta1 * m_ + (1.0 - agg.beta1) * d, state.yogi_m, delta)
    v = map_params(lambda v_, d: v_ - (1.0 - agg.beta2) * d * d * np.sign(v_ - d * d),
                   state.yogi_v, delta)
    params = map_params(lambda x, m_, v_: x + agg.eta * m_ / (np.sqrt(v_) + agg.tau),
                        state.params, m, v)
    return ServerState(params=params, yogi_m=m, yogi_v=v, round=state.round + 1)


def _aggregate(state: ServerState, updates: list[ClientUpdate],
               agg: AggregationConfig) -> ServerState:
    if agg.kind == "fedyogi":
        return aggregate_fedyogi(state, updates, agg)
    params = aggregate_fedavg(updates)
    return ServerState(params=params, yogi_m=state.yogi_m, yogi_v=state.yogi_v,
                       round=state.round + 1)


def pooled_test_set(clients: list[PreparedClient]) -> tuple[np.ndarray, np.ndarray]:
    """Union of the client test splits, concatenated in client-id order."""
    ordered = sorted(clients, key=lambda c: c.client_id)
    xs = [c.x_test for c in ordered if c.n_test]
    ys = [c.y_test for c in ordered if c.n_test]
    if not xs:
        n_features = clients[0].x_train.shape[1]
        return np.empty((0, n_features)), np.empty(0, dtype=np.int64)
    return np.vstack(xs), np.concatenate(ys)


def evaluate_global(params: ModelParams, x: np.ndarray, y: np.ndarray,
                    classes: tuple[str, ...]) -> MetricsReport:
    preds = predict(params, x)
    return evaluate_predictions(preds, y, len(classes), classes)


def run_rounds(clients: list[PreparedClient], initial: ModelParams, agg: AggregationConfig, *,
               rounds: int, local_epochs: int, optimizer: SgdSpec | AdamSpec,
               batch_size: int = 128, master_seed: int = 0, eval_each_round: bool = True,
               parallel: bool = False, max_workers: int | None = None
               ) -> tuple[ModelParams, list[RoundReport]]:
    """Run the full federation for `rounds` rounds with full participation.

    Every round broadcasts the global model, trains each client locally for
    `local_epochs` epochs, aggregates, and (optionally) evaluates weighted
    metrics on the pooled client test sets.
    """
    if not clients:
        raise ValueError("need at least one client")
    ids = [c.client_id for c in clients]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate client ids")
    for c in clients:
        if c.n_train == 0:
            raise ValueError(f"client {c.client_id} has an empty training split")

    clients = sorted(clients, key=lambda c: c.client_id)
    classes = clients[0].classes
    x_eval, y_eval = pooled_test_set(clients)
    if eval_each_round and len(y_eval) == 0:
        raise ValueError("evaluation requested but every client test split is empty")

    state = init_server_state(initial, agg)
    reports: list[RoundReport] = []

    def fit_one(client: PreparedClient, anchor: ModelParams, rnd: int) -> tuple[ClientUpdate, float]:
        cfg = TrainConfig(
            optimizer=optimizer,
            batch_size=batch_size,
            epochs=local_epochs,
            seed=derive_seed(master_seed, client.client_id, rnd),
            prox_mu=agg.mu if agg.kind == "fedprox" else 0.0,
            prox_anchor=anchor if agg.kind == "fedprox" else None,
        )
        params, losses = train_local(anchor, client.x_train, client.y_train, cfg)
        return ClientUpdate(client.client_id, params, client.n_train), (losses[-1] if losses else float("nan"))

    for rnd in range(1, rounds + 1):
        started = time.perf_counter()
        anchor = state.params
        if parallel:
            with ThreadPoolExecutor(max_workers=max_workers or len(clients)) as pool:
                results = list(pool.map(lambda c: fit_one(c, anchor, rnd), clients))
        else:
            results = [fit_one(c, anchor, rnd) for c in clients]
        updates = [r[0] for r in results]
        losses = {u.client_id: loss for u, loss in zip(updates, (r[1] for r in results))}
        state = _aggregate(state, updates, agg)
        report = None
        if eval_each_round:
            report = evaluate_global(state.params, x_eval, y_eval, classes)
        reports.append(RoundReport(round=rnd, client_losses=losses, metrics=report,
                                   wall_time_s=time.perf_counter() - started))
    return state.params, reports


@dataclass(frozen=True)
class PretrainSettings:
    supervised_epochs: int = 20
    batch_size: int = 128
    cd_epochs: int = 10
    cd_lr: float = 0.01
    cd_momentum: float = 0.9


def pretrain_global(x: np.ndarray, y: np.ndarray, preset: str, n_classes: int, *,
                    seed: int, settings: PretrainSettings = PretrainSettings(),
                    optimizer: SgdSpec | AdamSpec | None = None) -> ModelParams:
    """Train the chosen preset centrally (usually on the partition residual)
    to produce initial global weights.

    The dnn preset trains supervised only. The dbn preset first pretrains its
    stack with CD-1, converts it to a classifier, then fine-tunes.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("pretraining requires a non-empty dataset")
    n_features = x.shape[1]

    if preset == "dnn":
        params = init_xavier(preset_layer_specs("dnn", n_features, n_classes),
                             derive_seed(seed, 41))
        opt = optimizer or SgdSpec()
    elif preset == "dbn":
        dims = (n_features, 100, 150, 200, 50)
        stack = dbn_mod.pretrain_stack(dims, x, settings.cd_epochs, settings.cd_lr,
                                       settings.cd_momentum, derive_seed(seed, 43),
                                       batch_size=settings.batch_size)
        params = dbn_mod.to_classifier(stack, n_classes, derive_seed(seed, 47))
        opt = optimizer or AdamSpec()
    else:
        raise ValueError(f"unknown model preset {preset!r}")

    if settings.supervised_epochs == 0:
        return params
    cfg = TrainConfig(optimizer=opt, batch_size=settings.batch_size,
                      epochs=settings.supervised_epochs, seed=derive_seed(seed, 53))
    params, _ = train_local(params, x, y, cfg)
    return params

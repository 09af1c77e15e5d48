"""Command-line front end.

Subcommands: partition, synth, train-central, pretrain, train-fl, evaluate,
report. Every command is deterministic given --seed; --no-timestamps removes
creation metadata so repeated runs produce byte-identical outputs. On failure
the command exits non-zero and removes any outputs it created.
"""
from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import as_residual_partition, clean, fit_apply_codec, load_flows, partition_by_dst_ip, prepare_clients
from .experiments import pooled_training_set
from .federation import (AggregationConfig, PretrainSettings, evaluate_global, pooled_test_set,
                         pretrain_global, run_rounds)
from .nn import AdamSpec, SgdSpec, init_xavier, predict, preset_layer_specs
from .metrics import evaluate_predictions
from .schema import TON_LABEL_INDEX, ton_iot_schema
from .seeding import derive_seed
from .store import (history_to_dict, load_checkpoint, load_prepared, metrics_to_dict,
                    reference_partition_diff, save_checkpoint, save_prepared, write_json)
from .synth import generate, profile_ton10, residual_profile, synthetic_schema


@dataclass
class ExperimentConfig:
    """Every knob of an experiment, with defaults matching the reference
    regime: 50 rounds, two local epochs, ten clients."""

    model: str = "dnn"
    agg: str = "fedavg"
    mu: float = 0.01
    eta: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 0.001
    rounds: int = 50
    local_epochs: int = 2
    n_clients: int = 10
    batch_size: int = 128
    sgd_lr: float = 0.01
    sgd_momentum: float = 0.9
    adam_lr: float = 0.001
    cd_lr: float = 0.01
    cd_momentum: float = 0.9
    cd_epochs: int = 10
    central_epochs: int = 20
    pretrain_epochs: int = 20
    train_fraction: float = 0.8
    init: str = "random"
    seed: int = 0
    scale: float = 0.001
    residual_fraction: float = 0.25

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def optimizer(self):
        if self.model == "dnn":
            return SgdSpec(lr=self.sgd_lr, momentum=self.sgd_momentum)
        return AdamSpec(lr=self.adam_lr)

    def aggregation(self) -> AggregationConfig:
        return AggregationConfig(kind=self.agg, mu=self.mu, eta=self.eta,
                                 beta1=self.beta1, beta2=self.beta2, tau=self.tau)

    def pretrain_settings(self, epochs: int) -> PretrainSettings:
        return PretrainSettings(supervised_epochs=epochs, batch_size=self.batch_size,
                                cd_epochs=self.cd_epochs if self.model == "dbn" else 0,
                                cd_lr=self.cd_lr, cd_momentum=self.cd_momentum)


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file values override defaults; explicit flags override both."""
    values = ExperimentConfig().to_dict()
    config_path = getattr(args, "config", None)
    if config_path:
        values.update(json.loads(Path(config_path).read_text(encoding="utf-8")))
    cfg = ExperimentConfig.from_dict(values)
    for name in cfg.__dataclass_fields__:
        flag = getattr(args, name, None)
        if flag is not None:
            setattr(cfg, name, flag)
    return cfg


@contextmanager
def fresh_outputs(*paths):
    """Remove outputs created during the block if it raises."""
    states = [(Path(p), Path(p).exists()) for p in paths if p is not None]
    try:
        yield
    except BaseException:
        for path, existed in states:
            if existed or not path.exists():
                continue
            if path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
            else:
                path.unlink(missing_ok=True)
        raise


def _load_dataset(data_dir):
    clients, residual, manifest = load_prepared(data_dir)
    if not clients:
        raise ValueError(f"dataset {data_dir} lists no clients")
    return clients, residual, manifest


def _pooled(clients, split: str):
    if split == "train":
        return pooled_training_set(clients)
    if split == "test":
        return pooled_test_set(clients)
    xt, yt = pooled_training_set(clients)
    xe, ye = pooled_test_set(clients)
    return np.vstack([xt, xe]), np.concatenate([yt, ye])


def cmd_partition(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    with fresh_outputs(out):
        schema = ton_iot_schema()
        raw = load_flows(args.csv, schema)
        cleaned = clean(raw)
        parts, residual_raw = partition_by_dst_ip(cleaned, args.k)
        clients = prepare_clients(parts, schema, train_fraction=cfg.train_fraction,
                                  seed=cfg.seed, label_index=TON_LABEL_INDEX)
        residual = None
        if len(residual_raw):
            res_part = as_residual_partition(residual_raw)
            residual, _ = fit_apply_codec(res_part, schema, TON_LABEL_INDEX)
        save_prepared(out, clients, residual, seed=cfg.seed, source=str(args.csv),
                      include_timestamp=not args.no_timestamps)
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        if args.k == 10:
            diff = reference_partition_diff(manifest)
            write_json(out / "reference_diff.json", diff)
            mismatched = [d for d in diff if d["total_delta"]]
            print(f"reference check: {10 - len(mismatched)}/10 client totals match "
                  f"(details in reference_diff.json)")
        total = sum(e["n_records"] for e in manifest["clients"])
        print(f"wrote {len(clients)} clients ({total} records) and residual of "
              f"{manifest['residual']['n_records'] if manifest['residual'] else 0} records to {out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if args.profile != "ton10":
        raise ValueError(f"unknown profile {args.profile!r}")
    out = Path(args.out)
    with fresh_outputs(out):
        schema = synthetic_schema()
        profile = profile_ton10(cfg.scale)
        partitions = generate(profile, cfg.seed)
        clients = prepare_clients(partitions, schema, train_fraction=cfg.train_fraction,
                                  seed=cfg.seed, label_index=TON_LABEL_INDEX)
        residual = None
        if cfg.residual_fraction > 0.0:
            res_part = generate(residual_profile(profile, cfg.residual_fraction),
                                derive_seed(cfg.seed, 19))[0]
            res_part.client_id = 0
            res_part.train_idx = np.arange(len(res_part), dtype=np.int64)
            res_part.test_idx = np.empty(0, dtype=np.int64)
            residual, _ = fit_apply_codec(res_part, schema, TON_LABEL_INDEX)
        save_prepared(out, clients, residual, seed=cfg.seed,
                      source=f"synthetic:ton10:scale={cfg.scale}",
                      include_timestamp=not args.no_timestamps)
        total = sum(c.n_train + c.n_test for c in clients)
        print(f"wrote {len(clients)} synthetic clients ({total} records) to {out}")
    return 0


def cmd_train_central(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    ckpt = out / "model.ckpt"
    report_path = out / "metrics.json"
    with fresh_outputs(out, ckpt, report_path):
        clients, _, manifest = _load_dataset(args.data)
        x, y = pooled_training_set(clients)
        classes = tuple(manifest["classes"])
        params = pretrain_global(x, y, cfg.model, len(classes), seed=cfg.seed,
                                 settings=cfg.pretrain_settings(cfg.central_epochs),
                                 optimizer=cfg.optimizer())
        x_eval, y_eval = pooled_test_set(clients)
        report = evaluate_global(params, x_eval, y_eval, classes)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ckpt, params, classes, include_timestamp=not args.no_timestamps)
        write_json(report_path, metrics_to_dict(report))
        print(f"centralised {cfg.model}: weighted F1 {report.weighted_f1:.4f} "
              f"on {report.n_samples} test records")
    return 0


def cmd_pretrain(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    with fresh_outputs(out):
        clients, residual, manifest = _load_dataset(args.data)
        if residual is None or residual.n_train == 0:
            raise ValueError(f"dataset {args.data} has no pretraining residual")
        classes = tuple(manifest["classes"])
        params = pretrain_global(residual.x_train, residual.y_train, cfg.model,
                                 len(classes), seed=cfg.seed,
                                 settings=cfg.pretrain_settings(cfg.pretrain_epochs),
                                 optimizer=cfg.optimizer())
        out.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out, params, classes, include_timestamp=not args.no_timestamps)
        print(f"pretrained {cfg.model} on {residual.n_train} residual records -> {out}")
    return 0


def cmd_train_fl(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    ckpt = out / "model.ckpt"
    history_path = out / "history.json"
    with fresh_outputs(out, ckpt, history_path):
        clients, _, manifest = _load_dataset(args.data)
        classes = tuple(manifest["classes"])
        n_features = manifest["n_features"]
        if cfg.init == "pretrained":
            if not args.pretrained_checkpoint:
                raise ValueError("--init pretrained requires --pretrained-checkpoint")
            initial, header = load_checkpoint(args.pretrained_checkpoint)
            if header["dims"][0] != n_features:
                raise ValueError(f"checkpoint expects {header['dims'][0]} input features, "
                                 f"dataset has {n_features}")
            if tuple(header["classes"]) != classes:
                raise ValueError("checkpoint classes do not match the dataset classes")
        else:
            initial = init_xavier(preset_layer_specs(cfg.model, n_features, len(classes)),
                                  derive_seed(cfg.seed, 29))
        params, history = run_rounds(
            clients, initial, cfg.aggregation(),
            rounds=cfg.rounds, local_epochs=cfg.local_epochs,
            optimizer=cfg.optimizer(), batch_size=cfg.batch_size,
            master_seed=cfg.seed, eval_each_round=True, parallel=args.parallel,
        )
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ckpt, params, classes, include_timestamp=not args.no_timestamps)
        write_json(history_path, history_to_dict(history, config=cfg.to_dict(),
                                                 include_timings=not args.no_timestamps))
        if history:
            print(f"federated {cfg.model}/{cfg.agg}: round {history[-1].round} "
                  f"weighted F1 {history[-1].metrics.weighted_f1:.4f}")
        else:
            print(f"federated {cfg.model}/{cfg.agg}: 0 rounds, checkpoint is the initial model")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    params, header = load_checkpoint(args.checkpoint)
    clients, residual, manifest = _load_dataset(args.data)
    n_features = manifest["n_features"]
    if header["dims"][0] != n_features:
        raise ValueError(f"checkpoint expects {header['dims'][0]} input features, "
                         f"dataset has {n_features}")
    classes = tuple(manifest["classes"])
    if tuple(header["classes"]) != classes:
        raise ValueError("checkpoint classes do not match the dataset classes")
    x, y = _pooled(clients, args.split)
    if len(y) == 0:
        raise ValueError(f"split {args.split!r} holds no records")
    preds = predict(params, x)
    report = evaluate_predictions(preds, y, len(classes), classes)
    payload = metrics_to_dict(report)
    if args.out:
        with fresh_outputs(args.out):
            write_json(args.out, payload)
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    history = json.loads(Path(args.history).read_text(encoding="utf-8"))
    rows = []
    for entry in history["rounds"]:
        losses = list(entry["client_losses"].values())
        metrics = entry.get("metrics", {})
        rows.append({
            "round": entry["round"],
            "accuracy": metrics.get("accuracy"),
            "weighted_precision": metrics.get("weighted_precision"),
            "weighted_recall": metrics.get("weighted_recall"),
            "weighted_f1": metrics.get("weighted_f1"),
            "mean_client_loss": sum(losses) / len(losses) if losses else None,
        })
    with fresh_outputs(args.out):
        if args.format == "json":
            write_json(args.out, rows)
        else:
            with open(args.out, "w", newline="", encoding="utf-8") as fh:
                writer = csv.DictWriter(fh, fieldnames=["round", "accuracy", "weighted_precision",
                                                        "weighted_recall", "weighted_f1",
                                                        "mean_client_loss"])
                writer.writeheader()
                writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file; explicit flags override its values")
    sub.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    sub.add_argument("--no-timestamps", action="store_true",
                     help="omit creation timestamps for byte-identical outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fediron",
        description="Federated intrusion-detection workbench: partition flow data by "
                    "destination IP, train DNN/DBN classifiers centrally or federated, evaluate.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("partition", help="clean a flow CSV and partition it into FL clients")
    p.add_argument("--csv", required=True, help="flow CSV with the TON-IoT column layout")
    p.add_argument("--k", type=int, default=10, help="number of clients (largest dst_ip groups)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--train-fraction", type=float, dest="train_fraction", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_partition)

    p = subs.add_parser("synth", help="generate the synthetic skewed benchmark dataset")
    p.add_argument("--profile", default="ton10")
    p.add_argument("--scale", type=float, default=None, help="profile scale factor (default 0.001)")
    p.add_argument("--residual-fraction", type=float, dest="residual_fraction", default=None,
                   help="residual size as a fraction of per-class totals; 0 disables")
    p.add_argument("--train-fraction", type=float, dest="train_fraction", default=None)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("train-central", help="train one model on the pooled client data")
    p.add_argument("--data", required=True, help="prepared dataset directory")
    p.add_argument("--model", choices=("dnn", "dbn"), default=None)
    p.add_argument("--epochs", type=int, dest="central_epochs", default=None)
    p.add_argument("--cd-epochs", type=int, dest="cd_epochs", default=None)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=None)
    p.add_argument("--out", required=True, help="output directory (model.ckpt, metrics.json)")
    _add_common(p)
    p.set_defaults(func=cmd_train_central)

    p = subs.add_parser("pretrain", help="train initial global weights on the residual")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=("dnn", "dbn"), default=None)
    p.add_argument("--epochs", type=int, dest="pretrain_epochs", default=None)
    p.add_argument("--cd-epochs", type=int, dest="cd_epochs", default=None)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=None)
    p.add_argument("--out", required=True, help="checkpoint file to write")
    _add_common(p)
    p.set_defaults(func=cmd_pretrain)

    p = subs.add_parser("train-fl", help="run federated rounds over the prepared clients")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=("dnn", "dbn"), default=None)
    p.add_argument("--agg", choices=("fedavg", "fedprox", "fedyogi"), default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--epochs", type=int, dest="local_epochs", default=None)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=None)
    p.add_argument("--mu", type=float, default=None, help="fedprox proximal coefficient")
    p.add_argument("--eta", type=float, default=None, help="fedyogi server learning rate")
    p.add_argument("--beta1", type=float, default=None)
    p.add_argument("--beta2", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--init", choices=("random", "pretrained"), default=None)
    p.add_argument("--pretrained-checkpoint", help="checkpoint for --init pretrained")
    p.add_argument("--parallel", action="store_true", help="train clients in a thread pool")
    p.add_argument("--out", required=True, help="output directory (model.ckpt, history.json)")
    _add_common(p)
    p.set_defaults(func=cmd_train_fl)

    p = subs.add_parser("evaluate", help="evaluate a checkpoint on a prepared dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("test", "train", "all"), default="test")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("report", help="flatten a round history into plot-ready CSV/JSON")
    p.add_argument("--history", required=True, help="history.json from train-fl")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 (CLI boundary)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

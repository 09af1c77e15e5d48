"""On-disk formats: model checkpoints, prepared datasets, manifests, reports.

Checkpoint (.ckpt):
    magic "FLIDS1" | uint64 LE header length | UTF-8 JSON header | payload.
    The header records layer dims, activations, label classes, creation
    metadata, and its own byte length. The payload holds, per layer, the
    weight matrix then the bias vector, row-major little-endian float64.

Prepared dataset directory:
    manifest.json plus one .bin file per client (client_id 0 is the
    pretraining residual). Each .bin uses the same magic/header/payload
    envelope with magic "FLPRE1"; the payload is x_train, y_train, x_test,
    y_test (features float64, labels int64, all little-endian).

All JSON is written with sorted keys so identical inputs produce identical
bytes; timestamps are omitted when deterministic output is requested.
"""
from __future__ import annotations

import json
import struct
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .data import PreparedClient
from .federation import RoundReport
from .metrics import MetricsReport
from .nn import LayerSpec, ModelParams, make_params
from .schema import TON10_CLASS_ORDER, TON10_CLASS_COUNTS, TON10_CLIENT_TOTALS

CHECKPOINT_MAGIC = b"FLIDS1"
DATASET_MAGIC = b"FLPRE1"
FORMAT_VERSION = 1


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(_canonical_json(obj), encoding="utf-8")


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _encode_header(fields: dict) -> bytes:
    """Serialize the header with a self-referential header_bytes field."""
    def encode(n: int) -> bytes:
        return json.dumps({**fields, "header_bytes": n}, sort_keys=True,
                          separators=(",", ":")).encode("utf-8")

    guess = len(encode(0))
    for _ in range(4):
        blob = encode(guess)
        if len(blob) == guess:
            return blob
        guess = len(blob)
    raise RuntimeError("header length failed to stabilize")


def _write_envelope(path, magic: bytes, header_fields: dict, payload: bytes) -> None:
    header = _encode_header(header_fields)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(payload)


def _read_envelope(path, magic: bytes, what: str) -> tuple[dict, bytes]:
    blob = Path(path).read_bytes()
    if blob[: len(magic)] != magic:
        raise ValueError(f"{path} is not a {magic.decode()} {what} file")
    offset = len(magic)
    (header_len,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    header = json.loads(blob[offset:offset + header_len].decode("utf-8"))
    if header.get("header_bytes") != header_len:
        raise ValueError(f"{path}: header length field does not match the prefix")
    return header, blob[offset + header_len:]


def save_checkpoint(path, params: ModelParams, classes: tuple[str, ...], *,
                    created: str | None = None, include_timestamp: bool = True) -> None:
    fields = {
        "format": FORMAT_VERSION,
        "dims": list(params.dims),
        "activations": [s.activation for s in params.specs],
        "classes": list(classes),
    }
    if created is not None:
        fields["created"] = created
    elif include_timestamp:
        fields["created"] = _timestamp()
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    _write_envelope(path, CHECKPOINT_MAGIC, fields, payload)


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    header, payload = _read_envelope(path, CHECKPOINT_MAGIC, "checkpoint")
    dims = header["dims"]
    activations = header["activations"]
    if len(activations) != len(dims) - 1:
        raise ValueError(f"{path}: {len(activations)} activations for {len(dims)} dims")
    specs = tuple(LayerSpec(dims[i], dims[i + 1], activations[i]) for i in range(len(activations)))
    weights, biases = [], []
    offset = 0
    for s in specs:
        n = s.out_dim * s.in_dim
        w = np.frombuffer(payload, dtype="<f8", count=n, offset=offset).reshape(s.out_dim, s.in_dim)
        offset += n * 8
        b = np.frombuffer(payload, dtype="<f8", count=s.out_dim, offset=offset)
        offset += s.out_dim * 8
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if offset != len(payload):
        raise ValueError(f"{path}: payload size {len(payload)} does not match dims {dims}")
    return make_params(specs, weights, biases), header


def _client_payload(client: PreparedClient) -> bytes:
    return b"".join([
        np.ascontiguousarray(client.x_train, dtype="<f8").tobytes(),
        np.ascontiguousarray(client.y_train, dtype="<i8").tobytes(),
        np.ascontiguousarray(client.x_test, dtype="<f8").tobytes(),
        np.ascontiguousarray(client.y_test, dtype="<i8").tobytes(),
    ])


def _save_client(path, client: PreparedClient) -> None:
    fields = {
        "format": FORMAT_VERSION,
        "client_id": client.client_id,
        "dst_ip": client.dst_ip,
        "n_features": client.n_features,
        "n_train": client.n_train,
        "n_test": client.n_test,
        "classes": list(client.classes),
        "class_counts": {k: int(v) for k, v in client.class_counts.items()},
    }
    _write_envelope(path, DATASET_MAGIC, fields, _client_payload(client))


def _load_client(path) -> PreparedClient:
    header, payload = _read_envelope(path, DATASET_MAGIC, "prepared dataset")
    f = header["n_features"]
    n_train, n_test = header["n_train"], header["n_test"]
    sizes = [n_train * f * 8, n_train * 8, n_test * f * 8, n_test * 8]
    if sum(sizes) != len(payload):
        raise ValueError(f"{path}: payload size {len(payload)} does not match header counts")
    offset = 0
    x_train = np.frombuffer(payload, dtype="<f8", count=n_train * f, offset=offset).reshape(n_train, f)
    offset += sizes[0]
    y_train = np.frombuffer(payload, dtype="<i8", count=n_train, offset=offset)
    offset += sizes[1]
    x_test = np.frombuffer(payload, dtype="<f8", count=n_test * f, offset=offset).reshape(n_test, f)
    offset += sizes[2]
    y_test = np.frombuffer(payload, dtype="<i8", count=n_test, offset=offset)
    return PreparedClient(
        client_id=header["client_id"],
        dst_ip=header["dst_ip"],
        x_train=x_train.astype(np.float64),
        y_train=y_train.astype(np.int64),
        x_test=x_test.astype(np.float64),
        y_test=y_test.astype(np.int64),
        classes=tuple(header["classes"]),
        class_counts=dict(header["class_counts"]),
    )


def save_prepared(out_dir, clients: list[PreparedClient], residual: PreparedClient | None = None, *,
                  seed: int | None = None, source: str | None = None,
                  include_timestamp: bool = True) -> Path:
    """Write per-client binaries plus a manifest that doubles as the
    machine-readable per-client class-distribution table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for client in sorted(clients, key=lambda c: c.client_id):
        name = f"client_{client.client_id:02d}.bin"
        _save_client(out / name, client)
        entries.append({
            "client_id": client.client_id,
            "dst_ip": client.dst_ip,
            "file": name,
            "n_records": client.n_train + client.n_test,
            "n_train": client.n_train,
            "n_test": client.n_test,
            "class_counts": {k: int(v) for k, v in client.class_counts.items()},
        })
    manifest = {
        "format": FORMAT_VERSION,
        "n_features": clients[0].n_features if clients else 0,
        "classes": list(clients[0].classes) if clients else [],
        "clients": entries,
        "residual": None,
    }
    if residual is not None:
        _save_client(out / "residual.bin", residual)
        manifest["residual"] = {
            "dst_ip": residual.dst_ip,
            "file": "residual.bin",
            "n_records": residual.n_train + residual.n_test,
            "class_counts": {k: int(v) for k, v in residual.class_counts.items()},
        }
    if seed is not None:
        manifest["seed"] = seed
    if source is not None:
        manifest["source"] = source
    if include_timestamp:
        manifest["created"] = _timestamp()
    write_json(out / "manifest.json", manifest)
    return out / "manifest.json"


def load_prepared(data_dir) -> tuple[list[PreparedClient], PreparedClient | None, dict]:
    data_dir = Path(data_dir)
    manifest_path = data_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json in {data_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    clients = [_load_client(data_dir / e["file"]) for e in manifest["clients"]]
    residual = None
    if manifest.get("residual"):
        residual = _load_client(data_dir / manifest["residual"]["file"])
    return clients, residual, manifest


def metrics_to_dict(report: MetricsReport) -> dict:
    return {
        "accuracy": float(report.accuracy),
        "weighted_precision": float(report.weighted_precision),
        "weighted_recall": float(report.weighted_recall),
        "weighted_f1": float(report.weighted_f1),
        "n_samples": int(report.n_samples),
        "per_class": [
            {
                "label": m.label,
                "precision": float(m.precision),
                "recall": float(m.recall),
                "f1": float(m.f1),
                "support": int(m.support),
            }
            for m in report.per_class
        ],
    }


def history_to_dict(reports: list[RoundReport], *, config: dict | None = None,
                    include_timings: bool = True) -> dict:
    rounds = []
    for r in reports:
        entry: dict = {
            "round": r.round,
            "client_losses": {str(cid): float(loss) for cid, loss in r.client_losses.items()},
        }
        if r.metrics is not None:
            entry["metrics"] = metrics_to_dict(r.metrics)
        if include_timings:
            entry["wall_time_s"] = float(r.wall_time_s)
        rounds.append(entry)
    out = {"format": FORMAT_VERSION, "rounds": rounds}
    if config is not None:
        out["config"] = config
    return out


def reference_partition_diff(manifest: dict) -> list[dict]:
    """Best-effort comparison of a k=10 partition manifest against the
    reference per-client distribution of the TON-IoT corpus.

    Returns one entry per client with the total and per-class deltas; callers
    report these instead of failing on mismatch.
    """
    diffs = []
    for i, entry in enumerate(manifest["clients"][:10]):
        expected_total = TON10_CLIENT_TOTALS[i] if i < len(TON10_CLIENT_TOTALS) else None
        actual_total = entry["n_records"]
        class_deltas = {}
        for j, cls in enumerate(TON10_CLASS_ORDER):
            expected = TON10_CLASS_COUNTS[i][j] if i < len(TON10_CLASS_COUNTS) else 0
            actual = int(entry["class_counts"].get(cls, 0))
            if expected != actual:
                class_deltas[cls] = {"expected": expected, "actual": actual}
        diffs.append({
            "client_id": entry["client_id"],
            "dst_ip": entry["dst_ip"],
            "expected_total": expected_total,
            "actual_total": actual_total,
            "total_delta": None if expected_total is None else actual_total - expected_total,
            "class_deltas": class_deltas,
        })
    return diffs

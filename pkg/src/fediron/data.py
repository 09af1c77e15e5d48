"""Flow-record ingestion and per-client preparation.

Pipeline: load a flow CSV, clean it (drop rows with missing or non-finite
values, drop duplicate feature+label rows, strip endpoint columns), group by
destination IP into the k largest client partitions plus a pretraining
residual, stratify-split each client, then ordinal-encode and standardize
with statistics fitted on that client's training split only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .schema import FeatureSchema, LabelIndex, TON_LABEL_INDEX
from .seeding import derive_seed

PARTITION_KEY = "dst_ip"
UNSEEN_CATEGORY_CODE = -1.0  # test-time categories never observed in train


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class RawDataset:
    """Parsed flow rows. After clean() the frame holds only the partition key
    (when the schema has one), the feature columns, and the label column."""

    schema: FeatureSchema
    frame: pd.DataFrame
    cleaned: bool = False

    def __len__(self) -> int:
        return len(self.frame)

    def class_counts(self) -> dict[str, int]:
        counts = self.frame[self.schema.label_column].value_counts()
        return {str(k): int(v) for k, v in counts.items()}


@dataclass
class ClientPartition:
    """All records of one destination IP, plus the train/test split."""

    client_id: int
    dst_ip: str
    frame: pd.DataFrame  # feature columns + label column
    label_column: str
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.frame)

    def class_counts(self) -> dict[str, int]:
        counts = self.frame[self.label_column].value_counts()
        return {str(k): int(v) for k, v in counts.items()}


@dataclass(frozen=True)
class ColumnCodec:
    name: str
    kind: str  # numeric | categorical
    categories: tuple[str, ...] | None  # lexicographic train categories
    mean: float
    std: float


@dataclass(frozen=True)
class FeatureCodec:
    """Per-column encoding and standardization statistics, fitted on one
    client's training split and applied unchanged everywhere else."""

    columns: tuple[ColumnCodec, ...]
    classes: tuple[str, ...]

    def transform(self, frame: pd.DataFrame) -> np.ndarray:
        out = np.empty((len(frame), len(self.columns)), dtype=np.float64)
        for j, col in enumerate(self.columns):
            if col.kind == "categorical":
                mapping = {c: float(i) for i, c in enumerate(col.categories)}
                values = frame[col.name].map(mapping).fillna(UNSEEN_CATEGORY_CODE).to_numpy(dtype=np.float64)
            else:
                values = frame[col.name].to_numpy(dtype=np.float64)
            out[:, j] = (values - col.mean) / col.std
        return out

    def encode_labels(self, frame: pd.DataFrame, label_column: str) -> np.ndarray:
        index = LabelIndex(self.classes)
        return index.to_ids(frame[label_column].to_numpy())


@dataclass
class PreparedClient:
    """Model-ready arrays for one client (or the pretraining residual)."""

    client_id: int
    dst_ip: str
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    classes: tuple[str, ...]
    class_counts: dict[str, int]

    @property
    def n_features(self) -> int:
        return self.x_train.shape[1]

    @property
    def n_train(self) -> int:
        return self.x_train.shape[0]

    @property
    def n_test(self) -> int:
        return self.x_test.shape[0]


def load_flows(path, schema: FeatureSchema) -> RawDataset:
    """Parse a flow CSV whose header must match the schema column for column.

    Numeric cells that fail to parse become NaN markers; clean() removes
    those rows. Everything else is kept as text.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    got = list(frame.columns)
    want = schema.column_names
    for i in range(max(len(got), len(want))):
        g = got[i] if i < len(got) else "<missing>"
        w = want[i] if i < len(want) else "<extra>"
        if g != w:
            raise ValueError(f"header mismatch at column {i}: expected {w!r}, found {g!r}")
    for name in schema.numeric_names:
        frame[name] = pd.to_numeric(frame[name], errors="coerce")
    return RawDataset(schema=schema, frame=frame, cleaned=False)


def clean(raw: RawDataset) -> RawDataset:
    """Remove rows with missing or non-finite values and duplicate rows.

    Duplicates are judged on the feature+label view only. Drop-kind columns
    leave the feature view here; dst_ip survives as partition metadata when
    the schema defines it.
    """
    schema = raw.schema
    frame = raw.frame
    feature_names = schema.feature_names
    label_col = schema.label_column
    view_cols = feature_names + [label_col]

    ok = np.ones(len(frame), dtype=bool)
    for name in schema.numeric_names:
        ok &= np.isfinite(frame[name].to_numpy(dtype=np.float64))
    for name in schema.categorical_names:
        ok &= (frame[name].to_numpy() != "").astype(bool)
    ok &= (frame[label_col].to_numpy() != "").astype(bool)

    keep_cols = ([PARTITION_KEY] if PARTITION_KEY in frame.columns else []) + view_cols
    filtered = frame.loc[ok, keep_cols].reset_index(drop=True)
    dup = filtered.duplicated(subset=view_cols, keep="first").to_numpy()
    deduped = filtered.loc[~dup].reset_index(drop=True)
    return RawDataset(schema=schema, frame=deduped, cleaned=True)


def partition_by_dst_ip(data: RawDataset, k: int) -> tuple[list[ClientPartition], RawDataset]:
    """Split the cleaned dataset into the k largest destination-IP groups.

    Clients are ordered by descending sample count, ties broken by
    lexicographic dst_ip. The residual (all remaining groups) feeds
    server-side pretraining.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not data.cleaned:
        raise ValueError("partitioning requires a cleaned dataset")
    frame = data.frame
    if PARTITION_KEY not in frame.columns:
        raise ValueError(f"dataset has no {PARTITION_KEY!r} column to partition on")

    counts = frame[PARTITION_KEY].value_counts()
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if len(ranked) < k:
        raise ValueError(f"only {len(ranked)} distinct destination IPs, need {k}")

    top = [ip for ip, _ in ranked[:k]]
    label_col = data.schema.label_column
    clients = []
    for cid, ip in enumerate(top, start=1):
        sub = frame.loc[frame[PARTITION_KEY] == ip].drop(columns=[PARTITION_KEY]).reset_index(drop=True)
        clients.append(ClientPartition(client_id=cid, dst_ip=ip, frame=sub, label_column=label_col))
    residual_frame = frame.loc[~frame[PARTITION_KEY].isin(top)].reset_index(drop=True)
    residual = RawDataset(schema=data.schema, frame=residual_frame, cleaned=True)
    return clients, residual


def stratified_train_indices(labels: np.ndarray, fraction: float,
                             rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per class, pick round(fraction * n_c) training rows by seeded shuffle.

    Classes with fewer than two samples go entirely to train, since a
    stratified split of a singleton is undefined. Returned index arrays are
    sorted ascending.
    """
    train_parts: list[np.ndarray] = []
    test_parts: list[np.ndarray] = []
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < 2:
            train_parts.append(idx)
            continue
        n_train = min(len(idx), round_half_up(fraction * len(idx)))
        perm = rng.permutation(idx)
        train_parts.append(perm[:n_train])
        test_parts.append(perm[n_train:])
    train = np.sort(np.concatenate(train_parts)) if train_parts else np.empty(0, dtype=np.int64)
    test = np.sort(np.concatenate(test_parts)) if test_parts else np.empty(0, dtype=np.int64)
    return train.astype(np.int64), test.astype(np.int64)


def stratified_split(partition: ClientPartition, train_fraction: float, seed: int) -> ClientPartition:
    """Deterministic stratified split of one client partition."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    if len(partition) == 0:
        raise ValueError(f"client {partition.client_id} has no records to split")
    labels = partition.frame[partition.label_column].to_numpy()
    rng = np.random.default_rng(seed)
    train_idx, test_idx = stratified_train_indices(labels, train_fraction, rng)
    return replace(partition, train_idx=train_idx, test_idx=test_idx)


def as_residual_partition(residual: RawDataset) -> ClientPartition:
    """Wrap the pretraining residual as a pseudo-client whose every record is
    training data (client_id 0)."""
    frame = residual.frame
    if PARTITION_KEY in frame.columns:
        frame = frame.drop(columns=[PARTITION_KEY])
    frame = frame.reset_index(drop=True)
    part = ClientPartition(client_id=0, dst_ip="residual", frame=frame,
                           label_column=residual.schema.label_column)
    part.train_idx = np.arange(len(frame), dtype=np.int64)
    part.test_idx = np.empty(0, dtype=np.int64)
    return part


def fit_apply_codec(partition: ClientPartition, schema: FeatureSchema,
                    label_index: LabelIndex | None = None) -> tuple[PreparedClient, FeatureCodec]:
    """Fit the encoding/standardization codec on the training split and apply
    it to the whole partition.

    Categorical columns are ordinal-encoded with codes assigned by
    lexicographic order of the categories observed in train (unseen test
    categories map to -1), then every column is standardized to train mean 0
    and population stddev 1. Zero-variance columns keep stddev 1.
    """
    if partition.train_idx is None or partition.test_idx is None:
        raise ValueError(f"client {partition.client_id} must be split before encoding")
    if label_index is None:
        label_index = TON_LABEL_INDEX

    frame = partition.frame
    train_rows = frame.iloc[partition.train_idx]
    kinds = {c.name: c.kind for c in schema.feature_columns}

    codecs: list[ColumnCodec] = []
    encoded = np.empty((len(frame), schema.n_features), dtype=np.float64)
    for j, name in enumerate(schema.feature_names):
        if kinds[name] == "categorical":
            cats = tuple(sorted(set(train_rows[name].tolist())))
            mapping = {c: float(i) for i, c in enumerate(cats)}
            column = frame[name].map(mapping).fillna(UNSEEN_CATEGORY_CODE).to_numpy(dtype=np.float64)
        else:
            cats = None
            column = frame[name].to_numpy(dtype=np.float64)
        train_vals = column[partition.train_idx]
        mean = float(train_vals.mean())
        std = float(train_vals.std())  # population stddev
        if std <= 0.0:
            std = 1.0
        encoded[:, j] = (column - mean) / std
        codecs.append(ColumnCodec(name=name, kind=kinds[name], categories=cats, mean=mean, std=std))

    y = label_index.to_ids(frame[partition.label_column].to_numpy())
    prepared = PreparedClient(
        client_id=partition.client_id,
        dst_ip=partition.dst_ip,
        x_train=encoded[partition.train_idx],
        y_train=y[partition.train_idx],
        x_test=encoded[partition.test_idx],
        y_test=y[partition.test_idx],
        classes=label_index.classes,
        class_counts=partition.class_counts(),
    )
    codec = FeatureCodec(columns=tuple(codecs), classes=label_index.classes)
    return prepared, codec


def prepare_clients(partitions: list[ClientPartition], schema: FeatureSchema, *,
                    train_fraction: float, seed: int,
                    label_index: LabelIndex | None = None) -> list[PreparedClient]:
    """Split and encode every partition with per-client derived seeds."""
    prepared = []
    for part in partitions:
        split = stratified_split(part, train_fraction, derive_seed(seed, 17, part.client_id))
        client, _ = fit_apply_codec(split, schema, label_index)
        prepared.append(client)
    return prepared

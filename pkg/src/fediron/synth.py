"""Deterministic synthetic flow data with per-client class skew.

The built-in "ton10" profile mirrors the per-client class distribution of the
ten busiest TON-IoT destination IPs at a configurable scale, so experiments
run at desk size without the multi-gigabyte download. Features are
class-conditional Gaussians plus a few class-weighted categorical columns;
learnability of the mixture is asserted by a property test, not assumed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .data import ClientPartition, round_half_up
from .schema import Column, FeatureSchema, TON10_CLASS_COUNTS, TON10_CLASS_ORDER
from .seeding import derive_seed

N_FEATURES = 38
CATEGORICAL_COLUMNS = {2: 3, 11: 5, 23: 4, 31: 6}  # column index -> vocabulary size
LABEL_COLUMN = "label"

# Scale of the class mean vectors, in units of the shared feature stddev.
# Large enough that a linear classifier separates the classes on balanced
# data, while per-client standardization still leaves the pooled problem
# well below a perfect score (skewed clients shift each class differently).
DEFAULT_SEPARATION = 2.0

_MEAN_TAG = 9001
_CAT_TAG = 9002
_CLIENT_TAG = 9003


def feature_names() -> list[str]:
    return [f"f{i:02d}" for i in range(N_FEATURES)]


def synthetic_schema() -> FeatureSchema:
    cols = []
    for i, name in enumerate(feature_names()):
        kind = "categorical" if i in CATEGORICAL_COLUMNS else "numeric"
        cols.append(Column(name, kind))
    cols.append(Column(LABEL_COLUMN, "label"))
    return FeatureSchema(tuple(cols))


@dataclass(frozen=True)
class CategoricalSpec:
    column: int
    categories: tuple[str, ...]
    class_weights: np.ndarray  # n_classes x n_categories, rows sum to 1


@dataclass(frozen=True)
class SkewProfile:
    """Client-by-class sample counts plus the class-conditional generators."""

    classes: tuple[str, ...]
    dst_ips: tuple[str, ...]
    matrix: np.ndarray  # int64, n_clients x n_classes
    class_means: np.ndarray  # n_classes x N_FEATURES
    class_stddev: float
    categorical: tuple[CategoricalSpec, ...]

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix)
        if m.shape != (len(self.dst_ips), len(self.classes)):
            raise ValueError(f"matrix shape {m.shape} does not match "
                             f"{len(self.dst_ips)} clients x {len(self.classes)} classes")
        if (m < 0).any():
            raise ValueError("sample counts must be non-negative")
        if (m.sum(axis=1) == 0).any():
            raise ValueError("every client row must have at least one sample")

    @property
    def n_clients(self) -> int:
        return len(self.dst_ips)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def total(self) -> int:
        return int(self.matrix.sum())


def _class_means(n_classes: int, separation: float) -> np.ndarray:
    means = np.empty((n_classes, N_FEATURES), dtype=np.float64)
    for c in range(n_classes):
        rng = np.random.default_rng(derive_seed(_MEAN_TAG, c))
        means[c] = rng.normal(0.0, separation, size=N_FEATURES)
    return means


def _categorical_specs(n_classes: int) -> tuple[CategoricalSpec, ...]:
    specs = []
    for col, vocab in sorted(CATEGORICAL_COLUMNS.items()):
        rng = np.random.default_rng(derive_seed(_CAT_TAG, col))
        weights = rng.dirichlet(np.full(vocab, 2.0), size=n_classes)
        cats = tuple(f"v{j}" for j in range(vocab))
        specs.append(CategoricalSpec(column=col, categories=cats, class_weights=weights))
    return tuple(specs)


def profile_ton10(scale: float, separation: float = DEFAULT_SEPARATION) -> SkewProfile:
    """Reference skew profile scaled by `scale` (counts round half up)."""
    if not scale > 0.0:
        raise ValueError("scale must be positive")
    matrix = np.array(
        [[round_half_up(scale * count) for count in row] for row in TON10_CLASS_COUNTS],
        dtype=np.int64,
    )
    if (matrix.sum(axis=1) == 0).any():
        raise ValueError(f"scale {scale} rounds an entire client away; use a larger scale")
    n_classes = len(TON10_CLASS_ORDER)
    return SkewProfile(
        classes=TON10_CLASS_ORDER,
        dst_ips=tuple(f"10.0.0.{i}" for i in range(1, len(TON10_CLASS_COUNTS) + 1)),
        matrix=matrix,
        class_means=_class_means(n_classes, separation),
        class_stddev=1.0,
        categorical=_categorical_specs(n_classes),
    )


def residual_profile(profile: SkewProfile, fraction: float,
                     dst_ip: str = "10.0.1.1") -> SkewProfile:
    """Single-row profile holding `fraction` of the per-class column totals,
    standing in for the traffic of every destination IP outside the clients."""
    if not fraction > 0.0:
        raise ValueError("fraction must be positive")
    totals = profile.matrix.sum(axis=0)
    counts = np.array([round_half_up(fraction * t) for t in totals], dtype=np.int64)
    if counts.sum() == 0:
        raise ValueError("residual fraction rounds every class to zero")
    return replace(profile, matrix=counts.reshape(1, -1), dst_ips=(dst_ip,))


def balanced_profile(profile: SkewProfile, per_class: int,
                     dst_ip: str = "10.0.2.1") -> SkewProfile:
    """Single-client profile with `per_class` samples of every class; used to
    check that the class generators are learnable on balanced data."""
    if per_class < 1:
        raise ValueError("per_class must be positive")
    matrix = np.full((1, profile.n_classes), per_class, dtype=np.int64)
    return replace(profile, matrix=matrix, dst_ips=(dst_ip,))


def generate(profile: SkewProfile, seed: int) -> list[ClientPartition]:
    """Materialize every client of the profile, unsplit.

    Per-client streams are derived from (seed, client index), so output never
    depends on generation order. Rows are grouped by class in profile class
    order; counts match the matrix exactly.
    """
    names = feature_names()
    partitions = []
    for i, ip in enumerate(profile.dst_ips):
        rng = np.random.default_rng(derive_seed(_CLIENT_TAG, seed, i))
        blocks: list[np.ndarray] = []
        labels: list[np.ndarray] = []
        cat_blocks: dict[int, list[np.ndarray]] = {s.column: [] for s in profile.categorical}
        for c, cls in enumerate(profile.classes):
            m = int(profile.matrix[i, c])
            if m == 0:
                continue
            blocks.append(rng.normal(profile.class_means[c], profile.class_stddev,
                                     size=(m, N_FEATURES)))
            for spec in profile.categorical:
                codes = rng.choice(len(spec.categories), size=m, p=spec.class_weights[c])
                cat_blocks[spec.column].append(np.asarray(spec.categories, dtype=object)[codes])
            labels.append(np.full(m, cls, dtype=object))
        x = np.vstack(blocks) if blocks else np.empty((0, N_FEATURES))
        frame = pd.DataFrame(x, columns=names)
        for spec in profile.categorical:
            frame[names[spec.column]] = np.concatenate(cat_blocks[spec.column]) if labels else []
        frame[LABEL_COLUMN] = np.concatenate(labels) if labels else []
        partitions.append(ClientPartition(client_id=i + 1, dst_ip=ip, frame=frame,
                                          label_column=LABEL_COLUMN))
    return partitions

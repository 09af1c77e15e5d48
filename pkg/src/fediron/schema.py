"""Flow-record schemas, the global label catalogue, and reference statistics
for the TON-IoT corpus and its ten busiest destination-IP groups."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COLUMN_KINDS = ("numeric", "categorical", "label", "drop")


@dataclass(frozen=True)
class Column:
    name: str
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in COLUMN_KINDS:
            raise ValueError(f"unknown column kind {self.kind!r} for column {self.name!r}")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered column layout of a flow CSV.

    Each column is a feature (numeric or categorical), the class label, or a
    drop column that must never reach the model (timestamps, endpoints).
    """

    columns: tuple[Column, ...]

    def __post_init__(self) -> None:
        labels = [c.name for c in self.columns if c.kind == "label"]
        if len(labels) != 1:
            raise ValueError(f"schema needs exactly one label column, found {labels!r}")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("schema has duplicate column names")

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def feature_columns(self) -> list[Column]:
        return [c for c in self.columns if c.kind in ("numeric", "categorical")]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.feature_columns]

    @property
    def numeric_names(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == "numeric"]

    @property
    def categorical_names(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == "categorical"]

    @property
    def drop_names(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == "drop"]

    @property
    def label_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "label")

    @property
    def n_features(self) -> int:
        return len(self.feature_columns)


@dataclass(frozen=True)
class LabelIndex:
    """Global, order-stable mapping from class name to integer id."""

    classes: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("duplicate class names in label index")
        if not self.classes:
            raise ValueError("label index is empty")

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def index_of(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise KeyError(f"unknown class label {name!r}") from None

    def to_ids(self, values) -> np.ndarray:
        mapping = {name: i for i, name in enumerate(self.classes)}
        out = np.empty(len(values), dtype=np.int64)
        for i, v in enumerate(values):
            try:
                out[i] = mapping[v]
            except KeyError:
                raise KeyError(f"unknown class label {v!r}") from None
        return out


# Class names of the TON-IoT traffic types, ordered by total record count in
# the published corpus statistics (largest first).
TON_CLASSES: tuple[str, ...] = (
    "scanning",
    "ddos",
    "dos",
    "xss",
    "password",
    "normal",
    "backdoor",
    "injection",
    "ransomware",
    "mitm",
)

TON_LABEL_INDEX = LabelIndex(TON_CLASSES)

# Total record counts per class in the raw TON-IoT flow corpus. The counts
# sum to 22,339,021 rows.
TON_CLASS_TOTALS: dict[str, int] = {
    "scanning": 7_140_161,
    "ddos": 6_165_008,
    "dos": 3_375_328,
    "xss": 2_108_944,
    "password": 1_718_568,
    "normal": 796_380,
    "backdoor": 508_116,
    "injection": 452_659,
    "ransomware": 72_805,
    "mitm": 1_052,
}

# Endpoint metadata that must never become a model feature.
TON_DROP_COLUMNS = ("ts", "src_ip", "src_port", "dst_ip", "dst_port")

_TON_NUMERIC = (
    "duration",
    "src_bytes",
    "dst_bytes",
    "missed_bytes",
    "src_pkts",
    "src_ip_bytes",
    "dst_pkts",
    "dst_ip_bytes",
    "dns_qclass",
    "dns_qtype",
    "dns_rcode",
    "http_request_body_len",
    "http_response_body_len",
)

# Columns that may carry "-" placeholders or free text stay categorical so
# cleaning does not wipe out every non-HTTP / non-DNS flow.
_TON_CATEGORICAL = (
    "proto",
    "service",
    "conn_state",
    "dns_query",
    "dns_AA",
    "dns_RD",
    "dns_RA",
    "dns_rejected",
    "ssl_version",
    "ssl_cipher",
    "ssl_resumed",
    "ssl_established",
    "ssl_subject",
    "ssl_issuer",
    "http_trans_depth",
    "http_method",
    "http_uri",
    "http_version",
    "http_status_code",
    "http_user_agent",
    "http_orig_mime_types",
    "http_resp_mime_types",
    "weird_name",
    "weird_addr",
    "weird_notice",
)

_TON_COLUMN_ORDER = (
    ("ts", "drop"),
    ("src_ip", "drop"),
    ("src_port", "drop"),
    ("dst_ip", "drop"),
    ("dst_port", "drop"),
    ("proto", "categorical"),
    ("service", "categorical"),
    ("duration", "numeric"),
    ("src_bytes", "numeric"),
    ("dst_bytes", "numeric"),
    ("conn_state", "categorical"),
    ("missed_bytes", "numeric"),
    ("src_pkts", "numeric"),
    ("src_ip_bytes", "numeric"),
    ("dst_pkts", "numeric"),
    ("dst_ip_bytes", "numeric"),
    ("dns_query", "categorical"),
    ("dns_qclass", "numeric"),
    ("dns_qtype", "numeric"),
    ("dns_rcode", "numeric"),
    ("dns_AA", "categorical"),
    ("dns_RD", "categorical"),
    ("dns_RA", "categorical"),
    ("dns_rejected", "categorical"),
    ("ssl_version", "categorical"),
    ("ssl_cipher", "categorical"),
    ("ssl_resumed", "categorical"),
    ("ssl_established", "categorical"),
    ("ssl_subject", "categorical"),
    ("ssl_issuer", "categorical"),
    ("http_trans_depth", "categorical"),
    ("http_method", "categorical"),
    ("http_uri", "categorical"),
    ("http_version", "categorical"),
    ("http_request_body_len", "numeric"),
    ("http_response_body_len", "numeric"),
    ("http_status_code", "categorical"),
    ("http_user_agent", "categorical"),
    ("http_orig_mime_types", "categorical"),
    ("http_resp_mime_types", "categorical"),
    ("weird_name", "categorical"),
    ("weird_addr", "categorical"),
    ("weird_notice", "categorical"),
    ("label", "drop"),
    ("type", "label"),
)


def ton_iot_schema() -> FeatureSchema:
    """Schema of the processed TON-IoT network flow CSV (38 features)."""
    return FeatureSchema(tuple(Column(n, k) for n, k in _TON_COLUMN_ORDER))


# Reference per-client class distribution of the ten largest destination-IP
# groups after cleaning, in the column order below. Used as the built-in
# skew profile for synthetic data and by the best-effort partition check.
TON10_CLASS_ORDER: tuple[str, ...] = (
    "scanning",
    "ddos",
    "xss",
    "password",
    "dos",
    "normal",
    "backdoor",
    "injection",
    "ransomware",
    "mitm",
)

TON10_CLASS_COUNTS: tuple[tuple[int, ...], ...] = (
    (815, 3_502_650, 576, 26_460, 192_130, 16_202, 0, 48_052, 0, 0),
    (636_963, 993_069, 285_436, 278_833, 303_583, 149_315, 0, 93_129, 0, 2),
    (1_167_320, 6_906, 344_136, 864_611, 13_108, 48_046, 0, 91_740, 0, 7),
    (568_501, 465_525, 280_915, 95_029, 399_568, 79_285, 0, 95_323, 0, 3),
    (13_382, 630_127, 604_691, 2_883, 86_721, 27_304, 18, 12_889, 0, 564),
    (1_161_124, 210, 0, 0, 0, 4_508, 0, 0, 0, 0),
    (412_493, 452_559, 0, 4_444, 116_463, 22_154, 0, 0, 0, 0),
    (680_446, 0, 0, 0, 0, 22, 0, 0, 0, 12),
    (336_770, 3_642, 0, 37_835, 181_710, 21_745, 133, 0, 21_629, 1),
    (384, 0, 0, 0, 0, 0, 423_122, 3, 1_737, 0),
)

# Declared per-client totals from the same reference table. Client 10's
# declared total exceeds its class-count row sum by 3; both are kept so the
# best-effort check can report the discrepancy instead of hiding it.
TON10_CLIENT_TOTALS: tuple[int, ...] = (
    3_786_885,
    2_740_330,
    2_535_874,
    1_984_149,
    1_378_579,
    1_165_842,
    1_008_113,
    680_480,
    603_465,
    425_249,
)

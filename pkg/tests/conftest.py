from __future__ import annotations

import csv
from pathlib import Path

from hypothesis import HealthCheck, settings

settings.register_profile("suite", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")

from fediron.schema import ton_iot_schema  # noqa: E402

# One fully-populated flow row; tests override individual cells.
TON_ROW_DEFAULTS = {
    "ts": "1609459200.0",
    "src_ip": "192.168.1.50",
    "src_port": "1234",
    "dst_ip": "192.168.1.1",
    "dst_port": "80",
    "proto": "tcp",
    "service": "-",
    "duration": "1.0",
    "src_bytes": "100",
    "dst_bytes": "200",
    "conn_state": "SF",
    "missed_bytes": "0",
    "src_pkts": "2",
    "src_ip_bytes": "150",
    "dst_pkts": "2",
    "dst_ip_bytes": "250",
    "dns_query": "-",
    "dns_qclass": "0",
    "dns_qtype": "0",
    "dns_rcode": "0",
    "dns_AA": "-",
    "dns_RD": "-",
    "dns_RA": "-",
    "dns_rejected": "-",
    "ssl_version": "-",
    "ssl_cipher": "-",
    "ssl_resumed": "-",
    "ssl_established": "-",
    "ssl_subject": "-",
    "ssl_issuer": "-",
    "http_trans_depth": "-",
    "http_method": "-",
    "http_uri": "-",
    "http_version": "-",
    "http_request_body_len": "0",
    "http_response_body_len": "0",
    "http_status_code": "0",
    "http_user_agent": "-",
    "http_orig_mime_types": "-",
    "http_resp_mime_types": "-",
    "weird_name": "-",
    "weird_addr": "-",
    "weird_notice": "-",
    "label": "0",
    "type": "normal",
}


def make_flow_row(**overrides) -> dict:
    row = dict(TON_ROW_DEFAULTS)
    unknown = set(overrides) - set(row)
    if unknown:
        raise KeyError(f"unknown flow columns: {unknown}")
    row.update(overrides)
    return row


def write_flow_csv(path: Path, rows: list[dict], columns: list[str] | None = None) -> Path:
    columns = columns or ton_iot_schema().column_names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
    return path

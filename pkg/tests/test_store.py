import json
import struct

import numpy as np
import pytest

from fediron import nn, store
from fediron.data import PreparedClient


def toy_params(seed=0):
    return nn.init_xavier(nn.preset_layer_specs("dnn", 6, 4), seed)


def toy_client(client_id=1, n_features=5, seed=0):
    rng = np.random.default_rng(seed)
    return PreparedClient(
        client_id=client_id, dst_ip=f"10.0.0.{client_id}",
        x_train=rng.normal(size=(12, n_features)),
        y_train=rng.integers(0, 3, size=12),
        x_test=rng.normal(size=(4, n_features)),
        y_test=rng.integers(0, 3, size=4),
        classes=("a", "b", "c"),
        class_counts={"a": 6, "b": 6, "c": 4},
    )


class TestCheckpoint:
    def test_save_load_save_is_byte_identical(self, tmp_path):
        params = toy_params(3)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        store.save_checkpoint(p1, params, ("x", "y", "z", "w"), include_timestamp=False)
        loaded, header = store.load_checkpoint(p1)
        store.save_checkpoint(p2, loaded, tuple(header["classes"]), include_timestamp=False)
        assert p1.read_bytes() == p2.read_bytes()

    def test_round_trip_with_timestamp_preserved(self, tmp_path):
        params = toy_params(4)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        store.save_checkpoint(p1, params, ("a",), created="2026-08-08T00:00:00+00:00")
        loaded, header = store.load_checkpoint(p1)
        store.save_checkpoint(p2, loaded, tuple(header["classes"]), created=header["created"])
        assert p1.read_bytes() == p2.read_bytes()

    def test_arrays_restored_exactly(self, tmp_path):
        params = toy_params(5)
        path = tmp_path / "m.ckpt"
        store.save_checkpoint(path, params, ("a", "b", "c", "d"), include_timestamp=False)
        loaded, _ = store.load_checkpoint(path)
        assert nn.params_equal(loaded, params)

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_bytes(b"NOTFL1" + b"\x00" * 32)
        with pytest.raises(ValueError, match="FLIDS1"):
            store.load_checkpoint(path)

    def test_rejects_truncated_payload(self, tmp_path):
        params = toy_params(6)
        path = tmp_path / "m.ckpt"
        store.save_checkpoint(path, params, ("a", "b", "c", "d"), include_timestamp=False)
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(ValueError):
            store.load_checkpoint(path)

    def test_header_reports_its_own_length(self, tmp_path):
        params = toy_params(7)
        path = tmp_path / "m.ckpt"
        store.save_checkpoint(path, params, ("a", "b", "c", "d"), include_timestamp=False)
        blob = path.read_bytes()
        (header_len,) = struct.unpack_from("<Q", blob, 6)
        header = json.loads(blob[14:14 + header_len])
        assert header["header_bytes"] == header_len
        assert header["dims"] == [6, 128, 128, 64, 4]

    def test_activation_dim_mismatch_rejected(self, tmp_path):
        path = tmp_path / "m.ckpt"
        params = toy_params(8)
        store.save_checkpoint(path, params, ("a",), include_timestamp=False)
        blob = bytearray(path.read_bytes())
        (header_len,) = struct.unpack_from("<Q", blob, 6)
        header = json.loads(bytes(blob[14:14 + header_len]))
        header["dims"] = header["dims"][:-1]
        # Rewrite with a broken header of identical length semantics.
        new_header = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        rebuilt = blob[:6] + struct.pack("<Q", len(new_header)) + new_header + blob[14 + header_len:]
        path.write_bytes(bytes(rebuilt))
        with pytest.raises(ValueError):
            store.load_checkpoint(path)


class TestPreparedDataset:
    def test_round_trip_restores_arrays(self, tmp_path):
        clients = [toy_client(1), toy_client(2, seed=9)]
        residual = toy_client(0, seed=3)
        store.save_prepared(tmp_path / "data", clients, residual, seed=5,
                            include_timestamp=False)
        loaded, res, manifest = store.load_prepared(tmp_path / "data")
        assert [c.client_id for c in loaded] == [1, 2]
        for orig, back in zip(clients, loaded):
            assert np.array_equal(orig.x_train, back.x_train)
            assert np.array_equal(orig.y_train, back.y_train)
            assert np.array_equal(orig.x_test, back.x_test)
            assert np.array_equal(orig.y_test, back.y_test)
        assert np.array_equal(res.x_train, residual.x_train)
        assert manifest["seed"] == 5
        assert manifest["clients"][0]["class_counts"] == {"a": 6, "b": 6, "c": 4}

    def test_manifest_without_residual(self, tmp_path):
        store.save_prepared(tmp_path / "d", [toy_client(1)], None, include_timestamp=False)
        _, res, manifest = store.load_prepared(tmp_path / "d")
        assert res is None
        assert manifest["residual"] is None

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="manifest"):
            store.load_prepared(tmp_path)

    def test_identical_saves_are_byte_identical(self, tmp_path):
        clients = [toy_client(1)]
        store.save_prepared(tmp_path / "d1", clients, include_timestamp=False)
        store.save_prepared(tmp_path / "d2", clients, include_timestamp=False)
        assert ((tmp_path / "d1" / "manifest.json").read_bytes()
                == (tmp_path / "d2" / "manifest.json").read_bytes())
        assert ((tmp_path / "d1" / "client_01.bin").read_bytes()
                == (tmp_path / "d2" / "client_01.bin").read_bytes())


class TestReferenceDiff:
    def _manifest_entry(self, cid, total, counts):
        return {"client_id": cid, "dst_ip": f"ip{cid}", "n_records": total,
                "class_counts": counts}

    def test_matching_counts_produce_empty_deltas(self):
        from fediron.schema import TON10_CLASS_COUNTS, TON10_CLASS_ORDER, TON10_CLIENT_TOTALS
        clients = []
        for i, row in enumerate(TON10_CLASS_COUNTS):
            counts = {cls: v for cls, v in zip(TON10_CLASS_ORDER, row) if v}
            clients.append(self._manifest_entry(i + 1, TON10_CLIENT_TOTALS[i], counts))
        diff = store.reference_partition_diff({"clients": clients})
        assert all(d["total_delta"] == 0 for d in diff)
        assert all(d["class_deltas"] == {} for d in diff)

    def test_deviations_reported_per_client(self):
        from fediron.schema import TON10_CLASS_COUNTS, TON10_CLASS_ORDER, TON10_CLIENT_TOTALS
        clients = []
        for i, row in enumerate(TON10_CLASS_COUNTS):
            counts = {cls: v for cls, v in zip(TON10_CLASS_ORDER, row) if v}
            clients.append(self._manifest_entry(i + 1, TON10_CLIENT_TOTALS[i], counts))
        clients[0]["n_records"] += 7
        clients[0]["class_counts"]["ddos"] -= 3
        diff = store.reference_partition_diff({"clients": clients})
        assert diff[0]["total_delta"] == 7
        assert diff[0]["class_deltas"]["ddos"]["actual"] == 3_502_647
        assert all(d["total_delta"] == 0 for d in diff[1:])


def test_history_dict_is_json_serializable_and_orders_rounds():
    from fediron.federation import RoundReport
    from fediron.metrics import evaluate_predictions

    report = evaluate_predictions([0, 1], [0, 1], 2, ("a", "b"))
    rounds = [RoundReport(round=i, client_losses={1: 0.5, 2: 0.25},
                          metrics=report, wall_time_s=0.1) for i in (1, 2)]
    out = store.history_to_dict(rounds, config={"rounds": 2}, include_timings=False)
    blob = json.dumps(out, sort_keys=True)
    assert "wall_time_s" not in blob
    assert [r["round"] for r in out["rounds"]] == [1, 2]
    assert out["rounds"][0]["metrics"]["weighted_f1"] == 1.0

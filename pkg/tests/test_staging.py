import json

import pytest

from torsim import staging
from torsim.staging import (
    ConsensusSnapshot,
    DescriptorRecord,
    SnapshotRelay,
    StagingError,
    UserCountRecord,
    classify_position,
    compute_network_stats,
    compute_relay_stats,
    compute_user_probs,
    load_snapshots,
    read_staged,
    write_staged,
)


def relay(fp, guard=False, exit=False, weight=1.0, cc="us", ip="10.0.0.1"):
    return SnapshotRelay(
        fingerprint=fp, ip=ip, country=cc, is_guard=guard, is_exit=exit, weight=weight
    )


def snap(ts, relays):
    return ConsensusSnapshot(timestamp=ts, relays=tuple(relays))


def desc(fp, obs=100.0, rate=80.0, burst=200.0):
    return DescriptorRecord(
        fingerprint=fp, observed_bandwidth=obs, bandwidth_rate=rate, bandwidth_burst=burst
    )


class TestClassifyPosition:
    def test_exit_and_guard_is_d(self):
        assert classify_position(True, True) == "D"

    def test_neither_is_middle(self):
        assert classify_position(False, False) == "M"

    def test_guard_only(self):
        assert classify_position(True, False) == "G"

    def test_exit_only(self):
        assert classify_position(False, True) == "E"


class TestLoadSnapshots:
    def test_empty_directory(self, tmp_path):
        assert load_snapshots(tmp_path) == []

    def test_out_of_order_sorted(self, tmp_path):
        f = tmp_path / "snaps.jsonl"
        docs = [
            {"timestamp": 200, "relays": []},
            {"timestamp": 100, "relays": []},
        ]
        f.write_text("\n".join(json.dumps(d) for d in docs))
        got = load_snapshots(f)
        assert [s.timestamp for s in got] == [100, 200]

    def test_duplicate_timestamp_rejected(self, tmp_path):
        f = tmp_path / "snaps.jsonl"
        doc = json.dumps({"timestamp": 100, "relays": []})
        f.write_text(doc + "\n" + doc)
        with pytest.raises(StagingError, match="100"):
            load_snapshots(f)

    def test_parse_error_names_location(self, tmp_path):
        f = tmp_path / "snaps.jsonl"
        f.write_text('{"timestamp": 1, "relays": []}\nnot json')
        with pytest.raises(StagingError, match=":2"):
            load_snapshots(f)

    def test_duplicate_fingerprint_within_snapshot(self):
        with pytest.raises(StagingError, match="duplicate"):
            snap(1, [relay("a"), relay("a")])


class TestRelayStats:
    def test_running_fraction(self):
        snaps = [snap(i, [relay("a")] if i < 3 else []) for i in range(4)]
        got = compute_relay_stats(snaps, [desc("a")])
        assert got[0].running_frac == 0.75

    def test_guard_fraction_over_containing_snapshots(self):
        snaps = [
            snap(0, [relay("a", guard=True)]),
            snap(1, [relay("a", guard=False)]),
            snap(2, []),
        ]
        got = compute_relay_stats(snaps, [desc("a")])
        assert got[0].guard_frac == 0.5

    def test_normalized_weight(self):
        snaps = [snap(i, [relay("a", weight=2), relay("b", weight=2)]) for i in range(3)]
        got = compute_relay_stats(snaps, [desc("a"), desc("b")])
        assert got[0].weight == pytest.approx(0.5)

    def test_descriptor_medians_and_max(self):
        snaps = [snap(0, [relay("a")])]
        descs = [desc("a", obs=10, rate=1, burst=5), desc("a", obs=30, rate=3, burst=7)]
        (r,) = compute_relay_stats(snaps, descs)
        assert r.capacity == 30
        assert r.rate == 2
        assert r.burst == 6

    def test_missing_descriptor_drops_relay(self, caplog):
        snaps = [snap(0, [relay("a"), relay("b")])]
        got = compute_relay_stats(snaps, [desc("a")])
        assert [r.fingerprint for r in got] == ["a"]

    def test_latest_snapshot_wins_for_ip(self):
        snaps = [
            snap(0, [relay("a", ip="10.0.0.1")]),
            snap(1, [relay("a", ip="10.0.0.2")]),
        ]
        (r,) = compute_relay_stats(snaps, [desc("a")])
        assert r.ip == "10.0.0.2"

    def test_snapshot_order_invariant(self):
        a = [
            snap(0, [relay("a", weight=1), relay("b", weight=3)]),
            snap(1, [relay("a", weight=2)]),
        ]
        descs = [desc("a"), desc("b")]
        fwd = compute_relay_stats(a, descs)
        rev = compute_relay_stats(list(reversed(sorted(a, key=lambda s: s.timestamp))), descs)
        # stats only depend on the (sorted) snapshot content
        assert {r.fingerprint: r.weight for r in fwd} == {
            r.fingerprint: r.weight for r in rev
        }


class TestNetworkStats:
    def test_single_snapshot_counts(self):
        snaps = [snap(0, [relay(f"m{i}") for i in range(4)])]
        C, W = compute_network_stats(snaps)
        assert C == {"D": 0, "E": 0, "G": 0, "M": 4}

    def test_odd_median(self):
        snaps = [
            snap(t, [relay(f"m{i}") for i in range(k)])
            for t, k in enumerate((10, 20, 30))
        ]
        C, _ = compute_network_stats(snaps)
        assert C["M"] == 20

    def test_even_median_is_mean_of_central_pair(self):
        snaps = [
            snap(t, [relay(f"m{i}") for i in range(k)]) for t, k in enumerate((10, 20))
        ]
        C, _ = compute_network_stats(snaps)
        assert C["M"] == 15

    def test_positions_partition_relays(self):
        relays = [
            relay("a", guard=True, exit=True),
            relay("b", guard=True),
            relay("c", exit=True),
            relay("d"),
            relay("e"),
        ]
        C, _ = compute_network_stats([snap(0, relays)])
        assert sum(C.values()) == len(relays)

    def test_normalized_weights_sum_to_one(self):
        relays = [relay(f"r{i}", weight=float(i + 1)) for i in range(5)]
        _, W = compute_network_stats([snap(0, relays)])
        assert sum(W.values()) == pytest.approx(1.0, abs=1e-9)


class TestUserProbs:
    def test_symmetric_day(self):
        recs = [
            UserCountRecord("2023-01-01", "us", 50),
            UserCountRecord("2023-01-01", "de", 50),
        ]
        assert compute_user_probs(recs) == {"de": 0.5, "us": 0.5}

    def test_median_over_days(self):
        recs = []
        for day, us_p in enumerate((0.2, 0.4, 0.9)):
            recs.append(UserCountRecord(f"2023-01-0{day+1}", "us", int(us_p * 1000)))
            recs.append(UserCountRecord(f"2023-01-0{day+1}", "de", int((1 - us_p) * 1000)))
        probs = compute_user_probs(recs)
        # pre-renormalization medians: us 0.4, de 0.6
        assert probs["us"] == pytest.approx(0.4)
        assert probs["de"] == pytest.approx(0.6)

    def test_single_country(self):
        assert compute_user_probs([UserCountRecord("2023-01-01", "us", 7)]) == {"us": 1.0}

    def test_all_zero_errors(self):
        with pytest.raises(StagingError):
            compute_user_probs([UserCountRecord("2023-01-01", "us", 0)])


class TestStagedRoundtrip:
    def test_roundtrip_identity(self, staged_model, tmp_path):
        path = tmp_path / "staged.json"
        write_staged(staged_model, path)
        assert read_staged(path) == staged_model

    def test_version_mismatch(self, staged_model, tmp_path):
        path = tmp_path / "staged.json"
        write_staged(staged_model, path)
        doc = json.loads(path.read_text())
        doc["version"] = "bogus-9"
        path.write_text(json.dumps(doc))
        with pytest.raises(StagingError, match="bogus-9"):
            read_staged(path)

    def test_truncated_file(self, staged_model, tmp_path):
        path = tmp_path / "staged.json"
        write_staged(staged_model, path)
        path.write_text(path.read_text()[: 50])
        with pytest.raises(StagingError, match="parse"):
            read_staged(path)


class TestFixtureModelInvariants:
    def test_r_times_count_is_integer(self, staged_model):
        n = staged_model.consensus_count
        for r in staged_model.relays:
            count = r.running_frac * n
            assert abs(count - round(count)) < 1e-9
            assert count <= n

    def test_country_probs_sum_to_one(self, staged_model):
        total = sum(staged_model.country_probs.values())
        assert total == pytest.approx(1.0, abs=1e-9)
        assert all(p >= 0 for p in staged_model.country_probs.values())

    def test_position_counts_nonnegative(self, staged_model):
        assert all(v >= 0 for v in staged_model.position_counts.values())

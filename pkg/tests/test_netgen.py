import collections

import numpy as np
import pytest

from torsim import netgen
from torsim.netgen import (
    GenerationError,
    ScaleParams,
    SampledRelay,
    client_bandwidth,
    compute_traffic_params,
    config_from_dict,
    config_to_dict,
    count_auxiliary_hosts,
    generate,
    place_clients,
    place_relay,
    sample_full_network,
    scaled_count,
    subsample_position,
)
from torsim.staging import StagedModel, StagedRelay


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


def staged_relay(fp, r=1.0, g=0.0, e=0.0, w=1.0, cc="us"):
    return StagedRelay(
        fingerprint=fp, ip="10.0.0.1", country=cc, running_frac=r, guard_frac=g,
        exit_frac=e, weight=w, capacity=1e6, rate=9e5, burst=2e6,
    )


def model(relays, counts):
    C = {"D": 0, "E": 0, "G": 0, "M": 0} | counts
    return StagedModel(
        relays=tuple(relays),
        position_counts=C,
        position_weights={p: 0.25 for p in "DEGM"},
        country_probs={"us": 1.0},
        consensus_count=4,
    )


class TestScaledCount:
    # position totals fitted from the published per-scale composition
    C = {"G": 2040, "M": 3620, "E": 393, "D": 430}
    EXPECTED = {
        0.01: {"G": 20, "M": 36, "E": 4, "D": 4},
        0.1: {"G": 204, "M": 361, "E": 40, "D": 44},
        0.3: {"G": 612, "M": 1086, "E": 118, "D": 129},
    }

    @pytest.mark.parametrize("s", [0.01, 0.1, 0.3])
    def test_reference_rows_within_one(self, s):
        for pos, total in self.C.items():
            assert abs(scaled_count(total, s) - self.EXPECTED[s][pos]) <= 1

    def test_identity_at_full_scale(self):
        assert scaled_count(3620, 1.0) == 3620

    def test_floor_at_one(self):
        assert scaled_count(3, 0.01) == 1

    def test_zero_count_stays_zero(self):
        assert scaled_count(0, 0.5) == 0


class TestTrafficParams:
    def test_ten_percent_example(self):
        tp = compute_traffic_params(0.1, 1.0, 0.01)
        assert tp.users == 79_200
        assert tp.circuits_per_10min == pytest.approx(149_000.0)
        assert tp.clients == 792
        assert tp.tau == pytest.approx(188.13131313131314, rel=1e-12)

    def test_thirty_percent_clients(self):
        assert compute_traffic_params(0.3, 1.0, 0.01).clients == 2376

    def test_zero_load(self):
        tp = compute_traffic_params(0.1, 0.0, 0.01)
        assert tp.circuits_per_10min == 0
        assert tp.tau == 0

    def test_zero_clients_errors(self):
        with pytest.raises(GenerationError, match="increase"):
            compute_traffic_params(0.0001, 1.0, 0.001)


class TestAuxiliaryHosts:
    @pytest.mark.parametrize(
        "s,clients,expect",
        [
            (0.1, 792, (3, 79, 79)),
            (0.3, 2376, (3, 238, 238)),
            (0.01, 100, (3, 8, 10)),
        ],
    )
    def test_reference_rows(self, s, clients, expect):
        assert count_auxiliary_hosts(s, clients) == expect


class TestClientBandwidth:
    def test_boundary_at_p_001(self):
        assert client_bandwidth(0.01) == 1000 * netgen.MBIT

    def test_small_p(self):
        assert client_bandwidth(0.001) == 10_000 * netgen.MBIT

    def test_max_clamps_at_one_gbit(self):
        assert client_bandwidth(1.0) == netgen.GBIT


class TestSampleFullNetwork:
    def test_uniform_inclusion_when_r_equal(self):
        relays = [staged_relay(f"r{i:02d}") for i in range(10)]
        m = model(relays, {"M": 5})
        counts = collections.Counter()
        trials = 10_000
        r = rng(1)
        for _ in range(trials):
            for sr in sample_full_network(m, r):
                counts[sr.relay.fingerprint] += 1
        # each relay included w.p. 1/2 per trial; 3 sigma binomial bound
        expected = trials * 0.5
        sigma = (trials * 0.25) ** 0.5
        for fp in counts:
            assert abs(counts[fp] - expected) < 3 * sigma

    def test_zero_running_frac_never_sampled(self):
        relays = [staged_relay("dead", r=0.0)] + [
            staged_relay(f"r{i}") for i in range(5)
        ]
        m = model(relays, {"M": 3})
        r = rng(2)
        for _ in range(200):
            assert all(
                sr.relay.fingerprint != "dead" for sr in sample_full_network(m, r)
            )

    def test_certain_guard_flag(self):
        relays = [staged_relay(f"r{i}", g=1.0) for i in range(4)]
        m = model(relays, {"M": 2})
        assert all(sr.guard for sr in sample_full_network(m, rng(3)))

    def test_insufficient_pool_errors(self):
        m = model([staged_relay("a")], {"M": 5})
        with pytest.raises(GenerationError, match="need 5"):
            sample_full_network(m, rng())

    def test_inclusion_monotone_in_r(self):
        rs = np.linspace(0.1, 1.0, 8)
        relays = [staged_relay(f"r{i}", r=float(ri)) for i, ri in enumerate(rs)]
        m = model(relays, {"M": 4})
        counts = collections.Counter()
        r = rng(4)
        for _ in range(4000):
            for sr in sample_full_network(m, r):
                counts[sr.relay.fingerprint] += 1
        freqs = [counts[f"r{i}"] for i in range(8)]
        corr = np.corrcoef(rs, freqs)[0, 1]
        assert corr > 0.9


def sampled(fp, w):
    return SampledRelay(relay=staged_relay(fp, w=w), guard=False, exit=False)


class TestSubsample:
    def test_hand_worked_two_buckets(self):
        relays = [sampled(f"r{i}", float(i + 1)) for i in range(6)]
        picked = subsample_position(relays, 2)
        assert [p.relay.weight for p in picked] == [2.0, 5.0]

    def test_identity_when_m_equals_population(self):
        relays = [sampled(f"r{i}", float(i)) for i in range(4)]
        picked = subsample_position(relays, 4)
        assert sorted(p.relay.fingerprint for p in picked) == [f"r{i}" for i in range(4)]

    def test_m_one_is_lower_median(self):
        relays = [sampled(f"r{i}", float(i)) for i in range(4)]
        picked = subsample_position(relays, 1)
        assert picked[0].relay.weight == 1.0  # lower median of 0,1,2,3

    def test_m_too_large_errors(self):
        with pytest.raises(GenerationError):
            subsample_position([sampled("a", 1.0)], 2)

    def test_selection_properties_random_populations(self):
        r = rng(5)
        for _ in range(1000):
            n = int(r.integers(1, 40))
            m = int(r.integers(1, n + 1))
            relays = [sampled(f"r{i:03d}", float(w)) for i, w in enumerate(r.uniform(0, 10, n))]
            picked = subsample_position(relays, m)
            weights = [p.relay.weight for p in picked]
            assert weights == sorted(weights)
            # bucket bounds: recompute buckets and check membership
            ordered = sorted(relays, key=lambda x: (x.relay.weight, x.relay.fingerprint))
            base, extra = divmod(n, m)
            start = 0
            for i in range(m):
                size = base + (1 if i < extra else 0)
                bucket = ordered[start : start + size]
                assert bucket[0].relay.weight <= weights[i] <= bucket[-1].relay.weight
                start += size
            sizes = [base + 1] * extra + [base] * (m - extra)
            assert max(sizes) - min(sizes) <= 1


class TestPlacement:
    def test_single_city_country(self, internet_map):
        relay = staged_relay("a", cc="ru")
        cities = internet_map.cities_in("ru")
        got = place_relay(relay, internet_map, rng())
        assert got in cities

    def test_unknown_country_falls_back(self, internet_map):
        relay = staged_relay("a", cc="zz")
        got = place_relay(relay, internet_map, rng())
        assert got in internet_map.city_ids

    def test_two_city_country_balanced(self, internet_map):
        relay = staged_relay("a", cc="ru")  # ru has 2 cities in the fixture map
        r = rng(6)
        counts = collections.Counter(place_relay(relay, internet_map, r) for _ in range(10_000))
        a, b = counts.most_common(2)
        sigma = (10_000 * 0.25) ** 0.5
        assert abs(a[1] - 5000) < 3 * sigma

    def test_clients_follow_country_distribution(self, internet_map):
        U = {"us": 0.5, "de": 0.5}
        cities = place_clients(U, internet_map, 10_000, rng(7))
        us = sum(1 for c in cities if c.startswith("us"))
        sigma = (10_000 * 0.25) ** 0.5
        assert abs(us - 5000) < 3 * sigma

    def test_zero_clients(self, internet_map):
        assert place_clients({"us": 1.0}, internet_map, 0, rng()) == []

    def test_clients_only_in_mapped_countries(self, internet_map):
        U = {"us": 1.0}
        cities = place_clients(U, internet_map, 50, rng(8))
        assert all(c.startswith("us") for c in cities)


class TestGenerate:
    PARAMS = ScaleParams(scale=0.02, load=0.05, pscale=0.002, seed=42)

    def test_deterministic(self, staged_model, internet_map):
        a = generate(staged_model, internet_map, self.PARAMS)
        b = generate(staged_model, internet_map, self.PARAMS)
        assert config_to_dict(a) == config_to_dict(b)

    def test_every_position_nonempty(self, staged_model, internet_map):
        cfg = generate(staged_model, internet_map, self.PARAMS)
        relays = [h for h in cfg.hosts if h.role == "relay"]
        assert any(h.extra["guard"] and h.extra["exit"] for h in relays)
        assert any(h.extra["guard"] and not h.extra["exit"] for h in relays)
        assert any(h.extra["exit"] and not h.extra["guard"] for h in relays)
        assert any(not h.extra["exit"] and not h.extra["guard"] for h in relays)

    def test_host_counts_follow_formulas(self, staged_model, internet_map):
        cfg = generate(staged_model, internet_map, self.PARAMS)
        roles = collections.Counter(h.role for h in cfg.hosts)
        assert roles["dirauth"] == 3
        assert roles["markov_client"] == cfg.traffic.clients
        dirauth, perf, servers = count_auxiliary_hosts(
            self.PARAMS.scale, cfg.traffic.clients
        )
        assert roles["perf_client"] == perf
        assert roles["server"] == servers

    def test_different_seeds_differ(self, staged_model, internet_map):
        other = ScaleParams(scale=0.02, load=0.05, pscale=0.002, seed=43)
        a = generate(staged_model, internet_map, self.PARAMS)
        b = generate(staged_model, internet_map, other)
        fps_a = {h.extra["fp"] for h in a.hosts if h.role == "relay"}
        fps_b = {h.extra["fp"] for h in b.hosts if h.role == "relay"}
        assert fps_a != fps_b

    def test_config_roundtrip(self, staged_model, internet_map, tmp_path):
        cfg = generate(staged_model, internet_map, self.PARAMS)
        path = tmp_path / "config.json"
        netgen.write_config(cfg, path)
        assert config_to_dict(netgen.read_config(path)) == config_to_dict(cfg)

    def test_version_check(self, staged_model, internet_map):
        cfg = generate(staged_model, internet_map, self.PARAMS)
        doc = config_to_dict(cfg)
        doc["version"] = "other"
        with pytest.raises(GenerationError, match="version"):
            config_from_dict(doc)

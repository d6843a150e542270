"""Network generation: turn a staged model into a concrete scaled network.

The pipeline samples a full-size relay population weighted by uptime,
assigns guard/exit flags probabilistically, subsamples each position to
the target scale with the bucketed-median procedure, computes traffic
parameters from the user/circuit totals, and places every host in a city
of the Internet map. The result is a deterministic function of
(staged model, map, scale parameters): identical inputs produce a
byte-identical serialized config.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .inetmap import InternetMap
from .staging import StagedModel, StagedRelay, round_half_up, POSITIONS, classify_position
from .traffic import derive_seed

CONFIG_SCHEMA_VERSION = "torsim-net-1"

# Network-wide totals for an average 10-minute period: simultaneously
# active users (counted at guards) and active circuits (counted at exits).
PHI_USERS = 792_000
PSI_CIRCUITS = 1_490_000

DIRAUTH_COUNT = 3
PERF_CLIENTS_PER_USERS = 1_000  # one benchmark client per 1k modeled users
CLIENTS_PER_SERVER = 10

MBIT = 1_000_000
GBIT = 1_000_000_000


class GenerationError(ValueError):
    """Raised when a network cannot be generated from the given inputs."""


@dataclass(frozen=True)
class ScaleParams:
    scale: float  # s: network scale in (0, 1]
    load: float  # l: load factor >= 0
    pscale: float  # p: process scale in (0, 1]
    seed: int

    def __post_init__(self):
        if not 0 < self.scale <= 1:
            raise GenerationError(f"scale must be in (0,1], got {self.scale}")
        if self.load < 0:
            raise GenerationError(f"load must be >= 0, got {self.load}")
        if not 0 < self.pscale <= 1:
            raise GenerationError(f"pscale must be in (0,1], got {self.pscale}")


@dataclass(frozen=True)
class TrafficParams:
    users: int  # u = round(s * phi)
    circuits_per_10min: float  # c = l * s * psi
    clients: int  # round(p * u)
    tau: float  # c / (p * u)


@dataclass(frozen=True)
class SampledRelay:
    relay: StagedRelay
    guard: bool
    exit: bool

    @property
    def position(self) -> str:
        return classify_position(self.guard, self.exit)


@dataclass(frozen=True)
class HostSpec:
    role: str  # relay | dirauth | markov_client | perf_client | server
    city: str
    bw_up: float  # bits/s
    bw_down: float  # bits/s
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NetworkConfig:
    params: ScaleParams
    traffic: TrafficParams
    hosts: tuple[HostSpec, ...]


def sample_full_network(
    staged: StagedModel, rng: np.random.Generator
) -> list[SampledRelay]:
    """Draw a full-size relay set, weighted by running fraction.

    Sampling is without replacement with probability proportional to the
    remaining relays' running fractions (exponential-race keys). Each
    sampled relay then gets guard/exit flags from independent Bernoulli
    draws with its per-relay flag fractions.
    """
    n = sum(staged.position_counts.values())
    relays = sorted(staged.relays, key=lambda r: r.fingerprint)
    eligible = [r for r in relays if r.running_frac > 0]
    if len(eligible) < n:
        raise GenerationError(
            f"relay pool too small: need {n}, have {len(eligible)} with r > 0"
        )
    weights = np.array([r.running_frac for r in eligible])
    keys = rng.exponential(1.0, size=len(eligible)) / weights
    order = np.argsort(keys, kind="stable")[:n]
    chosen = [eligible[i] for i in sorted(order)]
    return [
        SampledRelay(
            relay=r,
            guard=bool(rng.random() < r.guard_frac),
            exit=bool(rng.random() < r.exit_frac),
        )
        for r in chosen
    ]


def scaled_count(count: int, scale: float) -> int:
    """Position count at scale s, rounded half-up, floored at 1."""
    if count < 0:
        raise GenerationError(f"negative position count {count}")
    if count == 0:
        return 0
    return max(1, round_half_up(scale * count))


def subsample_position(relays: list[SampledRelay], m: int) -> list[SampledRelay]:
    """Pick m relays preserving the weight distribution.

    Sort ascending by weight (ties by fingerprint), split into m
    contiguous buckets with sizes differing by at most one (larger
    buckets first), and take each bucket's lower-median element.
    """
    if m < 1:
        raise GenerationError(f"subsample size must be >= 1, got {m}")
    if m > len(relays):
        raise GenerationError(
            f"cannot subsample {m} from population of {len(relays)}"
        )
    ordered = sorted(relays, key=lambda x: (x.relay.weight, x.relay.fingerprint))
    base, extra = divmod(len(ordered), m)
    picked = []
    start = 0
    for i in range(m):
        size = base + (1 if i < extra else 0)
        bucket = ordered[start : start + size]
        picked.append(bucket[(len(bucket) - 1) // 2])
        start += size
    return picked


def compute_traffic_params(scale: float, load: float, pscale: float) -> TrafficParams:
    users = round_half_up(scale * PHI_USERS)
    circuits = load * scale * PSI_CIRCUITS
    clients = round_half_up(pscale * users)
    if clients < 1:
        raise GenerationError(
            f"p*u rounds to 0 clients (p={pscale}, u={users}); increase p or s"
        )
    tau = circuits / (pscale * users)
    return TrafficParams(users=users, circuits_per_10min=circuits, clients=clients, tau=tau)


def count_auxiliary_hosts(scale: float, clients: int) -> tuple[int, int, int]:
    """(dirauths, perf clients, servers) for a network at scale s."""
    perf = round_half_up(scale * PHI_USERS / PERF_CLIENTS_PER_USERS)
    servers = round_half_up(clients / CLIENTS_PER_SERVER)
    return DIRAUTH_COUNT, perf, servers


def client_bandwidth(pscale: float) -> float:
    """Symmetric client capacity in bits/s: max(10/p Mbit/s, 1 Gbit/s)."""
    return max(10.0 / pscale * MBIT, GBIT)


def place_relay(relay: StagedRelay, imap: InternetMap, rng: np.random.Generator) -> str:
    """Uniform city within the relay's country; global fallback if absent."""
    cities = imap.cities_in(relay.country) or imap.city_ids
    return cities[rng.integers(len(cities))]


def place_clients(
    country_probs: dict[str, float],
    imap: InternetMap,
    count: int,
    rng: np.random.Generator,
    max_retries: int = 16,
) -> list[str]:
    """Draw a country from U per client, then a uniform city within it."""
    countries = sorted(country_probs)
    probs = np.array([country_probs[c] for c in countries])
    probs = probs / probs.sum()
    placements = []
    for _ in range(count):
        cities: list[str] = []
        for _ in range(max_retries):
            cc = countries[rng.choice(len(countries), p=probs)]
            cities = imap.cities_in(cc)
            if cities:
                break
        if not cities:
            cities = imap.city_ids
        placements.append(cities[rng.integers(len(cities))])
    return placements


def _uniform_city(imap: InternetMap, rng: np.random.Generator) -> str:
    ids = imap.city_ids
    return ids[rng.integers(len(ids))]


def generate(staged: StagedModel, imap: InternetMap, params: ScaleParams) -> NetworkConfig:
    """Generate a complete scaled network configuration."""
    rng = np.random.Generator(np.random.PCG64(derive_seed(params.seed, 0xA11)))

    sampled = sample_full_network(staged, rng)
    by_position: dict[str, list[SampledRelay]] = {p: [] for p in POSITIONS}
    for sr in sampled:
        by_position[sr.position].append(sr)

    subsampled: list[SampledRelay] = []
    for pos in POSITIONS:
        target = scaled_count(staged.position_counts[pos], params.scale)
        pool = by_position[pos]
        if target == 0 or not pool:
            continue
        subsampled.extend(subsample_position(pool, min(target, len(pool))))

    traffic = compute_traffic_params(params.scale, params.load, params.pscale)
    n_dirauth, n_perf, n_servers = count_auxiliary_hosts(params.scale, traffic.clients)

    hosts: list[HostSpec] = []
    for i in range(n_dirauth):
        hosts.append(
            HostSpec(
                role="dirauth",
                city=_uniform_city(imap, rng),
                bw_up=100 * MBIT,
                bw_down=100 * MBIT,
            )
        )
    for sr in subsampled:
        r = sr.relay
        hosts.append(
            HostSpec(
                role="relay",
                city=place_relay(r, imap, rng),
                bw_up=8.0 * r.capacity,
                bw_down=8.0 * r.capacity,
                extra={
                    "fp": r.fingerprint,
                    "guard": sr.guard,
                    "exit": sr.exit,
                    "capacity": r.capacity,
                    "rate": r.rate,
                    "burst": r.burst,
                    "weight": r.weight,
                },
            )
        )
    client_bw = client_bandwidth(params.pscale)
    client_cities = place_clients(staged.country_probs, imap, traffic.clients, rng)
    for city in client_cities:
        hosts.append(
            HostSpec(
                role="markov_client",
                city=city,
                bw_up=client_bw,
                bw_down=client_bw,
                extra={
                    "cc": imap.cities[city].country,
                    "tau": traffic.tau,
                    "users": 1.0 / params.pscale,
                },
            )
        )
    for _ in range(n_perf):
        hosts.append(
            HostSpec(
                role="perf_client",
                city=_uniform_city(imap, rng),
                bw_up=GBIT,
                bw_down=GBIT,
            )
        )
    for _ in range(n_servers):
        hosts.append(
            HostSpec(
                role="server",
                city=_uniform_city(imap, rng),
                bw_up=GBIT,
                bw_down=GBIT,
            )
        )
    return NetworkConfig(params=params, traffic=traffic, hosts=tuple(hosts))


def config_to_dict(config: NetworkConfig) -> dict:
    hosts = []
    for h in config.hosts:
        doc: dict = {
            "role": h.role,
            "city": h.city,
            "bw_up": h.bw_up,
            "bw_down": h.bw_down,
        }
        if h.role in ("relay", "dirauth") and h.extra:
            doc["relay"] = h.extra
        elif h.role == "markov_client":
            doc["markov"] = h.extra
        elif h.role == "perf_client":
            doc["perf"] = h.extra
        elif h.role == "server":
            doc["server"] = h.extra
        hosts.append(doc)
    return {
        "version": CONFIG_SCHEMA_VERSION,
        "params": {
            "s": config.params.scale,
            "load": config.params.load,
            "pscale": config.params.pscale,
            "seed": config.params.seed,
            "u": config.traffic.users,
            "c": config.traffic.circuits_per_10min,
            "clients": config.traffic.clients,
            "tau": config.traffic.tau,
        },
        "hosts": hosts,
    }


def config_from_dict(doc: dict) -> NetworkConfig:
    version = doc.get("version")
    if version != CONFIG_SCHEMA_VERSION:
        raise GenerationError(
            f"config version mismatch: expected {CONFIG_SCHEMA_VERSION!r}, "
            f"found {version!r}"
        )
    p = doc["params"]
    params = ScaleParams(scale=p["s"], load=p["load"], pscale=p["pscale"], seed=p["seed"])
    traffic = TrafficParams(
        users=p["u"], circuits_per_10min=p["c"], clients=p["clients"], tau=p["tau"]
    )
    hosts = []
    for h in doc["hosts"]:
        extra = h.get("relay") or h.get("markov") or h.get("perf") or h.get("server") or {}
        hosts.append(
            HostSpec(
                role=h["role"],
                city=h["city"],
                bw_up=h["bw_up"],
                bw_down=h["bw_down"],
                extra=extra,
            )
        )
    return NetworkConfig(params=params, traffic=traffic, hosts=tuple(hosts))


def write_config(config: NetworkConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(config_to_dict(config), f, indent=1, sort_keys=True)
        f.write("\n")


def read_config(path) -> NetworkConfig:
    with open(path) as f:
        return config_from_dict(json.load(f))


def config_hash(config: NetworkConfig) -> str:
    blob = json.dumps(config_to_dict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]

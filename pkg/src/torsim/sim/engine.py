"""Deterministic flow-level discrete-event simulator.

Instead of packet-level TCP, transfers are fluid flows whose rates come
from max-min fair sharing of relay token-bucket capacities and host
bandwidths (see allocation). The event queue is ordered by
(time, insertion sequence), so a run is a pure function of
(config, duration, seed) and re-runs are byte-identical.

Markov clients create circuits with exponential inter-arrivals (rate tau
per 10 minutes), walk the stream model to schedule streams, and walk the
packet model to size each stream's transfers. Benchmark clients cycle
50 KiB / 1 MiB / 5 MiB downloads on fresh circuits with per-size
timeouts. All measured times are reported at 0.01 s resolution.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from ..inetmap import InternetMap
from ..netgen import NetworkConfig
from ..traffic import (
    CircuitProcess,
    MarkovModel,
    NEVER,
    default_models,
    next_circuit_delay,
    rng_for,
    walk_markov,
)
from .allocation import max_min_allocate

US = 1_000_000  # microseconds per second
TICK_US = US  # token refill / reallocation granularity

METRIC_RESOLUTION_S = 0.01

PERF_SIZES = (
    ("perf50k", 50 * 1024, 15.0),
    ("perf1m", 1024 * 1024, 60.0),
    ("perf5m", 5 * 1024 * 1024, 120.0),
)
PERF_INTERVAL_S = 60.0  # one benchmark download per client per interval

MARKOV_ABS_TIMEOUT_S = 600.0  # absolute stream deadline
MARKOV_IDLE_TIMEOUT_S = 300.0  # no-progress deadline

CELL_BYTES = 514  # application payload per packet event

# rng roles in the per-client seed tree
_ROLE_PATH, _ROLE_STREAM, _ROLE_PACKET, _ROLE_ARRIVAL = 0, 1, 2, 3


class SimulationError(ValueError):
    pass


@dataclass
class RelayNode:
    idx: int
    fp: str
    city: str
    capacity: float  # b, bytes/s
    rate: float  # lambda, bytes/s
    burst: float  # beta, bytes
    guard: bool
    exit: bool
    weight: float
    elem: int = -1
    tokens: float = 0.0
    cap_second: float = 0.0  # allocation capacity for the current second
    forwarded_in_second: float = 0.0


@dataclass
class EndpointNode:
    idx: int
    role: str
    city: str
    bw_up: float  # bytes/s
    bw_down: float  # bytes/s
    elem_up: int = -1
    elem_down: int = -1
    cc: str = ""
    tau: float = 0.0


@dataclass(frozen=True)
class CircuitPath:
    client: EndpointNode
    guard: RelayNode
    middle: RelayNode
    exit: RelayNode
    server: EndpointNode
    rtt_us: float


@dataclass
class Flow:
    fid: int
    path: CircuitPath
    direction: str  # to_client | to_server
    kind: str  # perf50k | perf1m | perf5m | markov
    bytes_total: float
    start_us: float
    activate_us: float
    deadline_us: float
    elems: list[int] = field(default_factory=list)
    bytes_done: float = 0.0
    first_byte_us: float | None = None
    last_progress_us: float = 0.0
    rate: float = 0.0  # bytes/s, piecewise constant
    state: str = "pending"  # pending | active | done | timed_out
    version: int = 0


@dataclass
class MetricsRecord:
    downloads: list[tuple]  # (kind, client, start_s, ttfb_s, ttlb_s, outcome)
    goodput: dict[int, float]  # second -> relay application bytes forwarded
    errors: dict[str, int]
    duration_s: float


def _round_res(seconds: float) -> float:
    return round(round(seconds / METRIC_RESOLUTION_S) * METRIC_RESOLUTION_S, 2)


def _weighted_pick(relays: list[RelayNode], rng: np.random.Generator) -> RelayNode:
    weights = np.array([r.weight for r in relays])
    total = weights.sum()
    if total <= 0:
        return relays[rng.integers(len(relays))]
    return relays[rng.choice(len(relays), p=weights / total)]


def build_circuit(
    relays: list[RelayNode],
    client: EndpointNode,
    server: EndpointNode,
    imap: InternetMap,
    rng: np.random.Generator,
) -> CircuitPath:
    """Weighted guard/middle/exit selection; positions must be distinct.

    Guard chosen by weight among guard-flagged relays, exit among
    exit-flagged relays excluding the guard, middle among the rest. No
    guard persistence across circuits (guards disabled).
    """
    guards = [r for r in relays if r.guard]
    if not guards:
        raise SimulationError("no guard-flagged relay available")
    guard = _weighted_pick(guards, rng)
    exits = [r for r in relays if r.exit and r.idx != guard.idx]
    if not exits:
        raise SimulationError("no exit-flagged relay available")
    exit_ = _weighted_pick(exits, rng)
    middles = [r for r in relays if r.idx not in (guard.idx, exit_.idx)]
    if not middles:
        raise SimulationError("no middle relay available")
    middle = _weighted_pick(middles, rng)
    rtt = path_rtt(client.city, guard.city, middle.city, exit_.city, server.city, imap)
    return CircuitPath(client=client, guard=guard, middle=middle, exit=exit_, server=server, rtt_us=rtt)


def path_rtt(
    client_city: str,
    guard_city: str,
    middle_city: str,
    exit_city: str,
    server_city: str,
    imap: InternetMap,
) -> float:
    """Round-trip latency: twice the one-way sum over the four hops."""
    hops = (
        (client_city, guard_city),
        (guard_city, middle_city),
        (middle_city, exit_city),
        (exit_city, server_city),
    )
    return 2.0 * sum(imap.latency_us(a, b) for a, b in hops)


class Simulation:
    """One simulation run. Use run() below rather than this class directly."""

    def __init__(self, config: NetworkConfig, imap: InternetMap, duration_s: float, seed: int):
        self.config = config
        self.imap = imap
        self.duration_us = duration_s * US
        self.seed = seed

        self.relays: list[RelayNode] = []
        self.markov_clients: list[EndpointNode] = []
        self.perf_clients: list[EndpointNode] = []
        self.servers: list[EndpointNode] = []
        self._build_hosts()
        if not self.servers:
            raise SimulationError("config has no server hosts")

        self.stream_model, self.packet_model = default_models()

        self.now_us = 0.0
        self.last_update_us = 0.0
        self._seq = 0
        self.events: list[tuple] = []
        self.active: list[Flow] = []
        self.flows_created = 0
        self.downloads: list[tuple] = []
        self.goodput: dict[int, float] = {}
        self.errors: dict[str, int] = {}

    # -- setup ---------------------------------------------------------

    def _build_hosts(self):
        n_elems = 0
        ridx = eidx = 0
        for h in self.config.hosts:
            if h.role == "relay":
                x = h.extra
                relay = RelayNode(
                    idx=ridx,
                    fp=x["fp"],
                    city=h.city,
                    capacity=float(x["capacity"]),
                    rate=float(x["rate"]),
                    burst=float(x["burst"]),
                    guard=bool(x["guard"]),
                    exit=bool(x["exit"]),
                    weight=float(x["weight"]),
                )
                relay.tokens = relay.burst
                relay.elem = n_elems
                n_elems += 1
                self.relays.append(relay)
                ridx += 1
            elif h.role in ("markov_client", "perf_client", "server"):
                node = EndpointNode(
                    idx=eidx,
                    role=h.role,
                    city=h.city,
                    bw_up=h.bw_up / 8.0,
                    bw_down=h.bw_down / 8.0,
                    cc=h.extra.get("cc", ""),
                    tau=float(h.extra.get("tau", 0.0)),
                )
                node.elem_up = n_elems
                node.elem_down = n_elems + 1
                n_elems += 2
                eidx += 1
                {
                    "markov_client": self.markov_clients,
                    "perf_client": self.perf_clients,
                    "server": self.servers,
                }[h.role].append(node)
            # dirauths carry no simulated traffic
        self.n_elems = n_elems
        self.capacities = np.zeros(n_elems)
        for r in self.relays:
            r.cap_second = min(r.capacity, r.tokens)
            self.capacities[r.elem] = max(r.cap_second, 1e-9)
        for group in (self.markov_clients, self.perf_clients, self.servers):
            for node in group:
                self.capacities[node.elem_up] = node.bw_up
                self.capacities[node.elem_down] = node.bw_down

    # -- event queue ---------------------------------------------------

    def _push(self, time_us: float, kind: str, data=None):
        self._seq += 1
        heapq.heappush(self.events, (time_us, self._seq, kind, data))

    # -- fluid progress ------------------------------------------------

    def _advance_to(self, t_us: float):
        """Integrate flow progress from the last update to t_us."""
        dt = (t_us - self.last_update_us) / US
        if dt > 0:
            second = int(self.last_update_us // US)
            for flow in self.active:
                delta = min(flow.rate * dt, flow.bytes_total - flow.bytes_done)
                if delta > 0:
                    flow.bytes_done += delta
                    flow.last_progress_us = t_us
                    for relay in (flow.path.guard, flow.path.middle, flow.path.exit):
                        relay.forwarded_in_second += delta
                    self.goodput[second] = self.goodput.get(second, 0.0) + 3.0 * delta
        self.last_update_us = t_us

    def _reallocate(self):
        """Recompute max-min rates and reproject completions."""
        self._advance_to(self.now_us)
        if self.active:
            rates = max_min_allocate([f.elems for f in self.active], self.capacities)
        else:
            rates = []
        next_tick_us = (math.floor(self.now_us / TICK_US) + 1) * TICK_US
        for flow, rate in zip(self.active, rates):
            flow.rate = float(rate)
            flow.version += 1
            if flow.first_byte_us is None and flow.rate > 0:
                flow.first_byte_us = self.now_us
                flow.last_progress_us = self.now_us
            if flow.rate > 0:
                finish_us = self.now_us + (flow.bytes_total - flow.bytes_done) / flow.rate * US
                # a tick reallocation will re-project anything beyond it
                if finish_us <= next_tick_us:
                    self._push(finish_us, "flow_done", (flow, flow.version))

    # -- flow lifecycle ------------------------------------------------

    def _flow_elems(self, path: CircuitPath, direction: str) -> list[int]:
        relay_elems = [path.guard.elem, path.middle.elem, path.exit.elem]
        if direction == "to_client":
            return [path.server.elem_up] + relay_elems + [path.client.elem_down]
        return [path.client.elem_up] + relay_elems + [path.server.elem_down]

    def _create_flow(self, path, direction, kind, bytes_total, timeout_s) -> Flow:
        self.flows_created += 1
        flow = Flow(
            fid=self.flows_created,
            path=path,
            direction=direction,
            kind=kind,
            bytes_total=bytes_total,
            start_us=self.now_us,
            activate_us=self.now_us + path.rtt_us,
            deadline_us=self.now_us + timeout_s * US,
            elems=self._flow_elems(path, direction),
        )
        self._push(flow.activate_us, "flow_start", flow)
        self._push(flow.deadline_us, "deadline", flow)
        if flow.kind == "markov":
            self._push(flow.activate_us + MARKOV_IDLE_TIMEOUT_S * US, "idle", flow)
        return flow

    def _finish_flow(self, flow: Flow, outcome: str):
        if flow.state == "active":
            self.active.remove(flow)
        flow.state = "done" if outcome == "ok" else "timed_out"
        client = f"{flow.path.client.role}-{flow.path.client.idx}"
        start_s = _round_res(flow.start_us / US)
        if outcome == "ok":
            ttfb = _round_res((flow.first_byte_us - flow.start_us) / US)
            ttlb = _round_res((self.now_us - flow.start_us) / US)
            ttlb = max(ttlb, ttfb)  # guard against resolution rounding inversion
            self.downloads.append((flow.kind, client, start_s, ttfb, ttlb, "ok"))
        else:
            ttfb = (
                _round_res((flow.first_byte_us - flow.start_us) / US)
                if flow.first_byte_us is not None
                else ""
            )
            self.downloads.append((flow.kind, client, start_s, ttfb, "", "timeout"))
            self.errors["timeout"] = self.errors.get("timeout", 0) + 1
        self._reallocate()

    # -- traffic sources -----------------------------------------------

    def _schedule_markov_clients(self):
        for ci, client in enumerate(self.markov_clients):
            proc = CircuitProcess(client.tau)
            rng = rng_for(self.seed, ci, _ROLE_ARRIVAL)
            delay = next_circuit_delay(proc, rng)
            if delay != NEVER:
                self._push(delay, "circuit", (ci, 0))

    def _on_circuit(self, ci: int, circuit_idx: int):
        client = self.markov_clients[ci]
        # next arrival first so a failed build does not stop the process
        proc = CircuitProcess(client.tau)
        arrival_rng = rng_for(self.seed, ci, _ROLE_ARRIVAL, circuit_idx)
        delay = next_circuit_delay(proc, arrival_rng)
        if delay != NEVER:
            self._push(self.now_us + delay, "circuit", (ci, circuit_idx + 1))

        path_rng = rng_for(self.seed, ci, circuit_idx, _ROLE_PATH)
        server = self.servers[path_rng.integers(len(self.servers))]
        try:
            path = build_circuit(self.relays, client, server, self.imap, path_rng)
        except SimulationError:
            self.errors["circuit_failure"] = self.errors.get("circuit_failure", 0) + 1
            return
        stream_rng = rng_for(self.seed, ci, circuit_idx, _ROLE_STREAM)
        walk = walk_markov(self.stream_model, stream_rng)
        offset = 0.0
        for sidx, (kind, delay_us) in enumerate(walk.events):
            if kind != "stream_create":
                continue
            offset += delay_us
            t = self.now_us + offset
            if t > self.duration_us:
                break
            self._push(t, "stream", (ci, circuit_idx, sidx, path))

    def _on_stream(self, ci: int, circuit_idx: int, sidx: int, path: CircuitPath):
        packet_rng = rng_for(self.seed, ci, circuit_idx, _ROLE_PACKET, sidx)
        walk = walk_markov(self.packet_model, packet_rng)
        to_server = sum(1 for kind, _ in walk.events if kind == "packet_to_server")
        to_client = sum(1 for kind, _ in walk.events if kind == "packet_to_client")
        if to_server:
            self._create_flow(path, "to_server", "markov", to_server * CELL_BYTES, MARKOV_ABS_TIMEOUT_S)
        if to_client:
            self._create_flow(path, "to_client", "markov", to_client * CELL_BYTES, MARKOV_ABS_TIMEOUT_S)

    def _schedule_perf_clients(self):
        # staggered starts spread benchmark load across the interval
        for pi in range(len(self.perf_clients)):
            offset = (pi * 7.0) % PERF_INTERVAL_S
            self._push(offset * US, "perf", (pi, 0))

    def _on_perf(self, pi: int, download_idx: int):
        self._push(self.now_us + PERF_INTERVAL_S * US, "perf", (pi, download_idx + 1))
        client = self.perf_clients[pi]
        kind, size, timeout_s = PERF_SIZES[download_idx % len(PERF_SIZES)]
        rng = rng_for(self.seed, 0x9EF, pi, download_idx)
        server = self.servers[rng.integers(len(self.servers))]
        try:
            path = build_circuit(self.relays, client, server, self.imap, rng)
        except SimulationError:
            self.errors["circuit_failure"] = self.errors.get("circuit_failure", 0) + 1
            return
        self._create_flow(path, "to_client", kind, float(size), timeout_s)

    # -- ticks ---------------------------------------------------------

    def _on_tick(self):
        for r in self.relays:
            r.tokens = max(0.0, r.tokens - r.forwarded_in_second)
            r.forwarded_in_second = 0.0
            r.tokens = min(r.burst, r.tokens + r.rate)
            r.cap_second = min(r.capacity, r.tokens)
            self.capacities[r.elem] = max(r.cap_second, 1e-9)
        self._reallocate()

    # -- main loop -----------------------------------------------------

    def run(self) -> MetricsRecord:
        if self.duration_us > 0:
            self._schedule_markov_clients()
            self._schedule_perf_clients()
            for tick in range(1, int(self.duration_us // TICK_US) + 1):
                self._push(float(tick * TICK_US), "tick", None)
        while self.events:
            t, _, kind, data = heapq.heappop(self.events)
            if t > self.duration_us:
                break
            assert t >= self.now_us - 1e-6, "event time went backwards"
            self.now_us = max(self.now_us, t)
            self._dispatch(kind, data)
        return MetricsRecord(
            downloads=self.downloads,
            goodput=self.goodput,
            errors=self.errors,
            duration_s=self.duration_us / US,
        )

    def _dispatch(self, kind: str, data):
        if kind == "tick":
            self._on_tick()
        elif kind == "circuit":
            self._on_circuit(*data)
        elif kind == "stream":
            self._on_stream(*data)
        elif kind == "perf":
            self._on_perf(*data)
        elif kind == "flow_start":
            flow = data
            if flow.state == "pending":
                flow.state = "active"
                self.active.append(flow)
                self._reallocate()
        elif kind == "flow_done":
            flow, version = data
            if flow.state == "active" and flow.version == version:
                self._advance_to(self.now_us)
                if flow.bytes_done >= flow.bytes_total - 1e-6:
                    self._finish_flow(flow, "ok")
        elif kind == "deadline":
            flow = data
            if flow.state in ("pending", "active"):
                self._advance_to(self.now_us)
                if flow.bytes_done >= flow.bytes_total - 1e-6:
                    self._finish_flow(flow, "ok")
                else:
                    self._finish_flow(flow, "timeout")
        elif kind == "idle":
            flow = data
            if flow.state in ("pending", "active"):
                idle_us = self.now_us - max(flow.last_progress_us, flow.activate_us)
                if flow.state == "active" and idle_us >= MARKOV_IDLE_TIMEOUT_S * US - 1e-6:
                    self._finish_flow(flow, "timeout")
                else:
                    base = max(flow.last_progress_us, flow.activate_us)
                    self._push(base + MARKOV_IDLE_TIMEOUT_S * US, "idle", flow)
        else:  # pragma: no cover
            raise SimulationError(f"unknown event kind {kind!r}")


def run(config: NetworkConfig, imap: InternetMap, duration_s: float, seed: int) -> MetricsRecord:
    """Simulate one network for duration_s simulated seconds."""
    return Simulation(config, imap, duration_s, seed).run()


def relay_goodput_series(
    metrics: MetricsRecord, extrapolate_scale: float | None = None
) -> list[tuple[int, float]]:
    """Per-second summed relay application goodput in bits/s.

    With extrapolate_scale=s, values are scaled by 1/s to extrapolate a
    sampled network's goodput to the full-size network.
    """
    factor = 8.0 * (1.0 / extrapolate_scale if extrapolate_scale else 1.0)
    out = []
    for second in range(int(metrics.duration_s)):
        out.append((second, metrics.goodput.get(second, 0.0) * factor))
    return out

"""Seeded Markov traffic models.

Three layers of traffic generation, all driven by explicit RNGs derived
from a single master seed:

* a single-state circuit process emitting new-circuit events with
  exponential inter-arrivals (mean MICROSECONDS_PER_10MIN / tau),
* generic Markov models with per-state emission distributions, used for
  the stream inter-arrival process (per circuit) and the packet process
  (per stream),
* a stable 64-bit seed derivation so every (client, circuit, role) gets
  an independent, reproducible stream.

The shipped default stream/packet models are synthetic stand-ins with
documented parameters; externally measured models can be loaded from
JSON documents with the same schema (see load_model).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

MICROSECONDS_PER_10MIN = 6 * 10**8

DISTRIBUTION_FAMILIES = ("exponential", "log_normal", "normal", "pareto", "uniform")

EVENT_KINDS = ("stream_create", "packet_to_server", "packet_to_client", "delay")

# Sentinel returned by next_circuit_delay when tau == 0 (no circuits ever).
NEVER = math.inf


class ModelError(ValueError):
    """Raised for invalid distribution specs or Markov model documents."""


@dataclass(frozen=True)
class DistributionSpec:
    """A named distribution family plus its parameters.

    Parameter order per family:
      exponential: (rate,)           rate > 0, mean 1/rate
      log_normal:  (mu, sigma)       parameters of the underlying normal
      normal:      (mu, sigma)       samples truncated at 0
      pareto:      (shape, scale)    shape > 0, scale > 0
      uniform:     (lo, hi)          lo <= hi
    """

    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.family not in DISTRIBUTION_FAMILIES:
            raise ModelError(f"unknown distribution family {self.family!r}")
        p = self.params
        if self.family == "exponential":
            if len(p) != 1 or p[0] <= 0:
                raise ModelError(f"exponential needs rate > 0, got {p}")
        elif self.family in ("log_normal", "normal"):
            if len(p) != 2 or p[1] < 0:
                raise ModelError(f"{self.family} needs (mu, sigma >= 0), got {p}")
        elif self.family == "pareto":
            if len(p) != 2 or p[0] <= 0 or p[1] <= 0:
                raise ModelError(f"pareto needs (shape > 0, scale > 0), got {p}")
        elif self.family == "uniform":
            if len(p) != 2 or p[0] > p[1]:
                raise ModelError(f"uniform needs lo <= hi, got {p}")


def sample_distribution(spec: DistributionSpec, rng: np.random.Generator) -> float:
    """Draw one nonnegative value; negatives truncate to 0 (duration semantics)."""
    p = spec.params
    if spec.family == "exponential":
        x = rng.exponential(1.0 / p[0])
    elif spec.family == "log_normal":
        x = rng.lognormal(p[0], p[1])
    elif spec.family == "normal":
        x = rng.normal(p[0], p[1])
    elif spec.family == "pareto":
        # scale * (1 + Pareto(shape)): support [scale, inf)
        x = p[1] * (1.0 + rng.pareto(p[0]))
    else:  # uniform
        x = rng.uniform(p[0], p[1])
    return max(x, 0.0)


@dataclass(frozen=True)
class CircuitProcess:
    """Single-state process emitting circuits at rate tau per 10 minutes."""

    tau: float

    def __post_init__(self):
        if self.tau < 0:
            raise ModelError(f"tau must be >= 0, got {self.tau}")


def next_circuit_delay(proc: CircuitProcess, rng: np.random.Generator) -> float:
    """Microseconds until the next circuit; NEVER when tau == 0."""
    if proc.tau == 0:
        return NEVER
    return rng.exponential(MICROSECONDS_PER_10MIN / proc.tau)


# splitmix64 finalizer constants; fixed so seed paths are stable across
# platforms and releases.
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_GOLDEN = 0x9E3779B97F4A7C15
_MASK = 0xFFFFFFFFFFFFFFFF


def _mix64(x: int) -> int:
    x &= _MASK
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK
    return x ^ (x >> 31)


def derive_seed(master: int, *indices: int) -> int:
    """Derive a stable 64-bit child seed from a master seed and an index path.

    Distinct (master, path) pairs map to distinct seeds except with
    negligible collision probability; the chain is a splitmix64-style
    multiply-xor-shift absorbed once per index.
    """
    state = _mix64(master)
    for idx in indices:
        state = _mix64((state + _GOLDEN + idx) & _MASK)
    return state


def rng_for(master: int, *indices: int) -> np.random.Generator:
    """Convenience: a PCG64 generator seeded from derive_seed."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, *indices)))


@dataclass(frozen=True)
class MarkovState:
    name: str
    terminal: bool = False
    emission: tuple[str, DistributionSpec] | None = None  # (event_kind, spec)
    transitions: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class MarkovModel:
    """Finite Markov chain with optional per-state timed emissions.

    The first state in `states` is the start state. Terminal states have
    no outgoing transitions; every non-terminal row sums to 1.
    """

    states: tuple[MarkovState, ...]

    def __post_init__(self):
        validate_model(self)

    @property
    def start(self) -> MarkovState:
        return self.states[0]

    def state(self, name: str) -> MarkovState:
        return self._by_name[name]

    @property
    def _by_name(self) -> dict[str, MarkovState]:
        return {s.name: s for s in self.states}


def validate_model(model: MarkovModel) -> None:
    """Check row normalization, terminal arity, and reachability."""
    if not model.states:
        raise ModelError("model has no states")
    names = [s.name for s in model.states]
    if len(set(names)) != len(names):
        raise ModelError("duplicate state names")
    by_name = {s.name: s for s in model.states}
    if not any(s.terminal for s in model.states):
        raise ModelError("model has no terminal state")
    for s in model.states:
        if s.terminal:
            if s.transitions:
                raise ModelError(f"terminal state {s.name!r} has outgoing transitions")
            continue
        total = sum(s.transitions.values())
        if abs(total - 1.0) > 1e-9:
            raise ModelError(f"transition row of {s.name!r} sums to {total}, not 1")
        for target, prob in s.transitions.items():
            if target not in by_name:
                raise ModelError(f"state {s.name!r} references unknown state {target!r}")
            if prob < 0:
                raise ModelError(f"negative transition probability in {s.name!r}")
        if s.emission is not None and s.emission[0] not in EVENT_KINDS:
            raise ModelError(f"unknown event kind {s.emission[0]!r} in {s.name!r}")
    # reachability from start
    seen = {model.states[0].name}
    frontier = [model.states[0]]
    while frontier:
        cur = frontier.pop()
        for target in cur.transitions:
            if target not in seen:
                seen.add(target)
                frontier.append(by_name[target])
    unreachable = set(names) - seen
    if unreachable:
        raise ModelError(f"unreachable states: {sorted(unreachable)}")


DEFAULT_WALK_BUDGET = 10**6


@dataclass(frozen=True)
class WalkResult:
    events: tuple[tuple[str, float], ...]  # (event_kind, delay before event)
    truncated: bool


def walk_markov(
    model: MarkovModel,
    rng: np.random.Generator,
    budget: int = DEFAULT_WALK_BUDGET,
) -> WalkResult:
    """Walk the chain from start to a terminal state, collecting timed events.

    Each visited state with an emission contributes one (event_kind, delay)
    pair, where the delay is drawn from the state's distribution. The walk
    stops at a terminal state or after `budget` emitted events (truncated).
    """
    events: list[tuple[str, float]] = []
    current = model.start
    by_name = model._by_name
    while not current.terminal:
        if current.emission is not None:
            kind, spec = current.emission
            events.append((kind, sample_distribution(spec, rng)))
            if len(events) >= budget:
                return WalkResult(tuple(events), truncated=True)
        targets = list(current.transitions.keys())
        probs = np.array([current.transitions[t] for t in targets])
        choice = targets[rng.choice(len(targets), p=probs / probs.sum())]
        current = by_name[choice]
    return WalkResult(tuple(events), truncated=False)


def model_to_dict(model: MarkovModel) -> dict:
    states = []
    for s in model.states:
        doc: dict = {"name": s.name, "terminal": s.terminal}
        if s.emission is not None:
            kind, spec = s.emission
            doc["emission"] = {
                "kind": kind,
                "family": spec.family,
                "params": list(spec.params),
            }
        if s.transitions:
            doc["transitions"] = dict(s.transitions)
        states.append(doc)
    return {"states": states}


def model_from_dict(doc: dict) -> MarkovModel:
    try:
        states = []
        for sdoc in doc["states"]:
            emission = None
            if "emission" in sdoc:
                e = sdoc["emission"]
                emission = (
                    e["kind"],
                    DistributionSpec(e["family"], tuple(float(x) for x in e["params"])),
                )
            states.append(
                MarkovState(
                    name=sdoc["name"],
                    terminal=bool(sdoc.get("terminal", False)),
                    emission=emission,
                    transitions={
                        k: float(v) for k, v in sdoc.get("transitions", {}).items()
                    },
                )
            )
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed model document: {exc}") from exc
    return MarkovModel(tuple(states))


def load_model(path) -> MarkovModel:
    with open(path) as f:
        return model_from_dict(json.load(f))


def save_model(model: MarkovModel, path) -> None:
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f, indent=1)


# Synthetic default model parameters. These are stand-ins with round
# numbers, not measured values: streams arrive on a circuit with
# exponential(1/15 s) gaps and a circuit carries ~3 streams on average;
# packet bursts alternate directions with geometric(0.1) lengths and
# log-normal think times between bursts.
DEFAULT_STREAMS_PER_CIRCUIT = 3.0
_STREAM_GAP_RATE = 1.0 / 15_000_000.0  # per microsecond: mean 15 s between streams
_BURST_CONTINUE_P = 0.9  # geometric burst length, mean 10 packets
_PACKET_GAP = DistributionSpec("log_normal", (8.0, 1.0))  # ~= 3 ms median, in us


def default_models() -> tuple[MarkovModel, MarkovModel]:
    """Synthetic (stream, packet) models. Parameters documented above."""
    # geometric stream count (>= 1) with mean 1/(1-p)
    p_more = 1.0 - 1.0 / DEFAULT_STREAMS_PER_CIRCUIT
    stream = MarkovModel(
        (
            MarkovState(
                "emit_stream",
                emission=("stream_create", DistributionSpec("exponential", (_STREAM_GAP_RATE,))),
                transitions={"emit_stream": p_more, "end": 1.0 - p_more},
            ),
            MarkovState("end", terminal=True),
        )
    )
    packet = MarkovModel(
        (
            MarkovState(
                "to_server",
                emission=("packet_to_server", _PACKET_GAP),
                transitions={"to_server": _BURST_CONTINUE_P, "to_client": 0.08, "end": 0.02},
            ),
            MarkovState(
                "to_client",
                emission=("packet_to_client", _PACKET_GAP),
                transitions={"to_client": _BURST_CONTINUE_P, "to_server": 0.05, "end": 0.05},
            ),
            MarkovState("end", terminal=True),
        )
    )
    return stream, packet

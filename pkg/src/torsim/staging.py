"""Staging: reduce a time series of relay snapshots to a compact model.

Inputs are JSON-lines files (or directories of them): hourly consensus
snapshots, per-relay descriptor records, and daily per-country user
counts. The output is a single staged-model JSON document holding
per-relay statistics (uptime fraction, flag fractions, median normalized
weight, capacities) plus network totals per position and the country
probability distribution for clients.
"""

from __future__ import annotations

import json
import logging
import math
import statistics
from dataclasses import dataclass, field, asdict
from pathlib import Path

log = logging.getLogger(__name__)

STAGED_SCHEMA_VERSION = "torsim-staged-1"

POSITIONS = ("D", "E", "G", "M")


class StagingError(ValueError):
    """Raised on malformed or inconsistent staging inputs."""


@dataclass(frozen=True)
class SnapshotRelay:
    fingerprint: str
    ip: str
    country: str
    is_guard: bool
    is_exit: bool
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise StagingError(f"relay {self.fingerprint}: negative weight")
        if len(self.country) != 2 or not self.country.islower():
            raise StagingError(
                f"relay {self.fingerprint}: bad country code {self.country!r}"
            )


@dataclass(frozen=True)
class ConsensusSnapshot:
    timestamp: int
    relays: tuple[SnapshotRelay, ...]

    def __post_init__(self):
        fps = [r.fingerprint for r in self.relays]
        if len(set(fps)) != len(fps):
            raise StagingError(
                f"snapshot {self.timestamp}: duplicate relay fingerprints"
            )


@dataclass(frozen=True)
class DescriptorRecord:
    fingerprint: str
    observed_bandwidth: float  # bytes/s
    bandwidth_rate: float  # bytes/s
    bandwidth_burst: float  # bytes

    def __post_init__(self):
        if min(self.observed_bandwidth, self.bandwidth_rate, self.bandwidth_burst) < 0:
            raise StagingError(f"descriptor {self.fingerprint}: negative bandwidth")


@dataclass(frozen=True)
class UserCountRecord:
    date: str  # YYYY-MM-DD
    country: str
    count: int


@dataclass(frozen=True)
class StagedRelay:
    fingerprint: str
    ip: str
    country: str
    running_frac: float  # r: fraction of consensuses containing the relay
    guard_frac: float  # g: fraction of containing consensuses with guard flag
    exit_frac: float  # e
    weight: float  # w: median normalized consensus weight
    capacity: float  # b: max observed bandwidth, bytes/s
    rate: float  # lambda: median token rate, bytes/s
    burst: float  # beta: median token burst, bytes


@dataclass(frozen=True)
class StagedModel:
    relays: tuple[StagedRelay, ...]
    position_counts: dict[str, int]  # C: median relay count per position
    position_weights: dict[str, float]  # W: median total normalized weight
    country_probs: dict[str, float]  # U
    consensus_count: int

    def __post_init__(self):
        if set(self.position_counts) != set(POSITIONS):
            raise StagingError(f"position_counts keys must be {POSITIONS}")
        if self.country_probs:
            total = sum(self.country_probs.values())
            if abs(total - 1.0) > 1e-9:
                raise StagingError(f"country probabilities sum to {total}, not 1")


def classify_position(is_guard: bool, is_exit: bool) -> str:
    """Map flag pair to position: D=exit+guard, E=exit, G=guard, M=middle."""
    if is_exit:
        return "D" if is_guard else "E"
    return "G" if is_guard else "M"


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def median_int(values) -> int:
    """Median rounded half-up, for integer-valued statistics."""
    return round_half_up(statistics.median(values))


def _parse_snapshot(doc: dict, origin: str) -> ConsensusSnapshot:
    try:
        relays = tuple(
            SnapshotRelay(
                fingerprint=r["fp"],
                ip=r["ip"],
                country=r["cc"],
                is_guard=bool(r["guard"]),
                is_exit=bool(r["exit"]),
                weight=float(r["weight"]),
            )
            for r in doc["relays"]
        )
        return ConsensusSnapshot(timestamp=int(doc["timestamp"]), relays=relays)
    except (KeyError, TypeError, ValueError) as exc:
        raise StagingError(f"{origin}: bad snapshot record: {exc}") from exc


def _jsonl_records(path: Path):
    """Yield (record, origin) pairs from one JSON-lines file."""
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            origin = f"{path}:{lineno}"
            try:
                yield json.loads(line), origin
            except json.JSONDecodeError as exc:
                raise StagingError(f"{origin}: {exc}") from exc


def _input_files(path) -> list[Path]:
    path = Path(path)
    if not path.exists():
        raise StagingError(f"input path does not exist: {path}")
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix in (".json", ".jsonl"))
    return [path]


def load_snapshots(path) -> list[ConsensusSnapshot]:
    """Load consensus snapshots from a file or directory, sorted by timestamp."""
    snapshots = []
    for f in _input_files(path):
        for doc, origin in _jsonl_records(f):
            snapshots.append(_parse_snapshot(doc, origin))
    snapshots.sort(key=lambda s: s.timestamp)
    for a, b in zip(snapshots, snapshots[1:]):
        if a.timestamp == b.timestamp:
            raise StagingError(f"duplicate snapshot timestamp {a.timestamp}")
    return snapshots


def load_descriptors(path) -> list[DescriptorRecord]:
    records = []
    for f in _input_files(path):
        for doc, origin in _jsonl_records(f):
            try:
                records.append(
                    DescriptorRecord(
                        fingerprint=doc["fp"],
                        observed_bandwidth=float(doc["obs_bw"]),
                        bandwidth_rate=float(doc["rate"]),
                        bandwidth_burst=float(doc["burst"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise StagingError(f"{origin}: bad descriptor record: {exc}") from exc
    return records


def load_user_counts(path) -> list[UserCountRecord]:
    records = []
    for f in _input_files(path):
        for doc, origin in _jsonl_records(f):
            try:
                records.append(
                    UserCountRecord(
                        date=str(doc["date"]),
                        country=str(doc["cc"]),
                        count=int(doc["count"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise StagingError(f"{origin}: bad user-count record: {exc}") from exc
    return records


def compute_relay_stats(
    snapshots: list[ConsensusSnapshot],
    descriptors: list[DescriptorRecord],
) -> list[StagedRelay]:
    """Per-relay statistics over the snapshot period.

    Relays without any descriptor record are dropped (capacities are
    load-bearing; fabricating them would corrupt load balancing) and the
    drop count is logged.
    """
    if not snapshots:
        raise StagingError("need at least one snapshot")

    by_fp: dict[str, list[DescriptorRecord]] = {}
    for d in descriptors:
        by_fp.setdefault(d.fingerprint, []).append(d)

    # per-relay accumulators over containing snapshots
    appearances: dict[str, int] = {}
    guard_hits: dict[str, int] = {}
    exit_hits: dict[str, int] = {}
    norm_weights: dict[str, list[float]] = {}
    latest: dict[str, SnapshotRelay] = {}  # from latest containing snapshot

    for snap in snapshots:
        total_weight = sum(r.weight for r in snap.relays)
        for r in snap.relays:
            fp = r.fingerprint
            appearances[fp] = appearances.get(fp, 0) + 1
            guard_hits[fp] = guard_hits.get(fp, 0) + int(r.is_guard)
            exit_hits[fp] = exit_hits.get(fp, 0) + int(r.is_exit)
            norm = r.weight / total_weight if total_weight > 0 else 0.0
            norm_weights.setdefault(fp, []).append(norm)
            latest[fp] = r  # snapshots iterate in timestamp order

    n_consensus = len(snapshots)
    staged = []
    dropped = 0
    for fp in sorted(appearances):
        descs = by_fp.get(fp)
        if not descs:
            dropped += 1
            continue
        seen = appearances[fp]
        staged.append(
            StagedRelay(
                fingerprint=fp,
                ip=latest[fp].ip,
                country=latest[fp].country,
                running_frac=seen / n_consensus,
                guard_frac=guard_hits[fp] / seen,
                exit_frac=exit_hits[fp] / seen,
                weight=statistics.median(norm_weights[fp]),
                capacity=max(d.observed_bandwidth for d in descs),
                rate=statistics.median(d.bandwidth_rate for d in descs),
                burst=statistics.median(d.bandwidth_burst for d in descs),
            )
        )
    if dropped:
        log.warning("dropped %d relays with no descriptor record", dropped)
    return staged


def compute_network_stats(
    snapshots: list[ConsensusSnapshot],
) -> tuple[dict[str, int], dict[str, float]]:
    """Median per-position relay counts C and total normalized weights W."""
    if not snapshots:
        raise StagingError("need at least one snapshot")
    counts: dict[str, list[int]] = {p: [] for p in POSITIONS}
    weights: dict[str, list[float]] = {p: [] for p in POSITIONS}
    for snap in snapshots:
        total_weight = sum(r.weight for r in snap.relays)
        per_count = {p: 0 for p in POSITIONS}
        per_weight = {p: 0.0 for p in POSITIONS}
        for r in snap.relays:
            pos = classify_position(r.is_guard, r.is_exit)
            per_count[pos] += 1
            if total_weight > 0:
                per_weight[pos] += r.weight / total_weight
        for p in POSITIONS:
            counts[p].append(per_count[p])
            weights[p].append(per_weight[p])
    C = {p: median_int(counts[p]) for p in POSITIONS}
    W = {p: float(statistics.median(weights[p])) for p in POSITIONS}
    return C, W


def compute_user_probs(records: list[UserCountRecord]) -> dict[str, float]:
    """Median daily per-country user probability, renormalized to sum to 1."""
    if not records:
        raise StagingError("need at least one user-count record")
    by_day: dict[str, dict[str, int]] = {}
    for rec in records:
        by_day.setdefault(rec.date, {})[rec.country] = rec.count
    daily_probs: dict[str, list[float]] = {}
    for day, counts in by_day.items():
        total = sum(counts.values())
        if total == 0:
            raise StagingError(f"all-zero user counts on {day}")
        for cc, count in counts.items():
            daily_probs.setdefault(cc, []).append(count / total)
    medians = {cc: statistics.median(ps) for cc, ps in daily_probs.items()}
    total = sum(medians.values())
    if total == 0:
        raise StagingError("all-zero median user probabilities")
    return {cc: m / total for cc, m in sorted(medians.items())}


def stage(snapshots, descriptors, user_counts) -> StagedModel:
    """Run the full staging pass over loaded inputs."""
    relays = compute_relay_stats(snapshots, descriptors)
    C, W = compute_network_stats(snapshots)
    U = compute_user_probs(user_counts)
    return StagedModel(
        relays=tuple(relays),
        position_counts=C,
        position_weights=W,
        country_probs=U,
        consensus_count=len(snapshots),
    )


def write_staged(model: StagedModel, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "version": STAGED_SCHEMA_VERSION,
        "consensus_count": model.consensus_count,
        "position_counts": model.position_counts,
        "position_weights": model.position_weights,
        "country_probs": model.country_probs,
        "relays": [asdict(r) for r in model.relays],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def read_staged(path) -> StagedModel:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise StagingError(f"{path}: cannot parse staged model: {exc}") from exc
    version = doc.get("version")
    if version != STAGED_SCHEMA_VERSION:
        raise StagingError(
            f"{path}: schema version mismatch: expected "
            f"{STAGED_SCHEMA_VERSION!r}, found {version!r}"
        )
    try:
        return StagedModel(
            relays=tuple(StagedRelay(**r) for r in doc["relays"]),
            position_counts={k: int(v) for k, v in doc["position_counts"].items()},
            position_weights={k: float(v) for k, v in doc["position_weights"].items()},
            country_probs={k: float(v) for k, v in doc["country_probs"].items()},
            consensus_count=int(doc["consensus_count"]),
        )
    except (KeyError, TypeError) as exc:
        raise StagingError(f"{path}: malformed staged model: {exc}") from exc

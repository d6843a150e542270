"""Internet map: cities with bandwidths, edges with latencies.

Maps are GraphML files. Vertex attributes: `country` (two-letter code),
`up_bandwidth` and `down_bandwidth` (bits/s). Edge attributes: `latency`
(microseconds, one-way) and optional `packet_loss`, which is forced to 0
on load regardless of the stored value.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx

# One-way latency assumed when a city pair has no edge (includes the
# self-edge case of two hosts in the same city).
FALLBACK_LATENCY_US = 50_000.0


class MapError(ValueError):
    """Raised on malformed map files."""


@dataclass(frozen=True)
class City:
    id: str
    country: str
    up_bandwidth: float  # bits/s
    down_bandwidth: float  # bits/s


class InternetMap:
    def __init__(self, cities: list[City], edges: dict[tuple[str, str], float]):
        if not cities:
            raise MapError("map has no cities")
        self.cities = {c.id: c for c in cities}
        self._latency = edges  # keyed by sorted (a, b) pair, microseconds
        self.by_country: dict[str, list[str]] = {}
        for c in cities:
            self.by_country.setdefault(c.country, []).append(c.id)
        for ids in self.by_country.values():
            ids.sort()

    @property
    def city_ids(self) -> list[str]:
        return sorted(self.cities)

    def latency_us(self, a: str, b: str) -> float:
        """One-way latency between cities; fallback when no edge exists."""
        return self._latency.get((min(a, b), max(a, b)), FALLBACK_LATENCY_US)

    def cities_in(self, country: str) -> list[str]:
        return self.by_country.get(country, [])


def load_map(path) -> InternetMap:
    """Load a GraphML map, forcing packet loss to zero on every edge."""
    try:
        graph = nx.read_graphml(path)
    except Exception as exc:
        raise MapError(f"{path}: cannot parse map: {exc}") from exc

    cities = []
    for node, attrs in graph.nodes(data=True):
        try:
            cities.append(
                City(
                    id=str(node),
                    country=str(attrs["country"]),
                    up_bandwidth=float(attrs["up_bandwidth"]),
                    down_bandwidth=float(attrs["down_bandwidth"]),
                )
            )
        except KeyError as exc:
            raise MapError(f"{path}: city {node!r} missing attribute {exc}") from exc

    edges = {}
    for a, b, attrs in graph.edges(data=True):
        try:
            latency = float(attrs["latency"])
        except KeyError as exc:
            raise MapError(f"{path}: edge {a}-{b} missing attribute {exc}") from exc
        a, b = str(a), str(b)
        edges[(min(a, b), max(a, b))] = latency
        # packet_loss intentionally discarded: forced to 0 in memory
    return InternetMap(cities, edges)


def save_map(imap: InternetMap, path) -> None:
    graph = nx.Graph()
    for c in imap.cities.values():
        graph.add_node(
            c.id,
            country=c.country,
            up_bandwidth=c.up_bandwidth,
            down_bandwidth=c.down_bandwidth,
        )
    for (a, b), latency in imap._latency.items():
        graph.add_edge(a, b, latency=latency, packet_loss=0.0)
    nx.write_graphml(graph, path)

"""Data-center network model: hosts, switches, full-duplex links.

Links are stored undirected with one capacity; each direction carries that
capacity independently. Link ids used in paths and reservations are
directed ``(a, b)`` tuples in the direction of travel.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

import networkx as nx

GB = 1e9
GBPS = 1e9

LinkId = tuple  # (from_endpoint, to_endpoint)


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class HostSpec:
    cpu_total_mips: float = 160000.0
    cores: int = 16
    memory: float = 10 * GB
    storage: float = 1000 * GB
    nic_bandwidth: float = 1 * GBPS

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise TopologyError(f"HostSpec.{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class PathSet:
    src: str
    dst: str
    paths: tuple
    aggregate_bandwidth: float

    def links(self) -> frozenset:
        return frozenset(link for path in self.paths for link in path)


class Topology:
    def __init__(self, hosts: Mapping[str, HostSpec], switches: Iterable[str],
                 links: Iterable[tuple]):
        self.hosts = dict(hosts)
        self.switches = frozenset(switches)
        overlap = self.switches & set(self.hosts)
        if overlap:
            raise TopologyError(f"ids used as both host and switch: {sorted(overlap)}")
        self._capacity: dict[frozenset, float] = {}
        self._adj: dict[str, set] = {n: set() for n in (*self.hosts, *self.switches)}
        for a, b, cap in links:
            if a not in self._adj or b not in self._adj:
                raise TopologyError(f"link ({a}, {b}) references an unknown endpoint")
            if a == b:
                raise TopologyError(f"self-loop on {a}")
            if not cap > 0:
                raise TopologyError(f"link ({a}, {b}) capacity must be positive")
            self._capacity[frozenset((a, b))] = float(cap)
            self._adj[a].add(b)
            self._adj[b].add(a)
        self.host_locations = {}
        for h in self.hosts:
            attached = sorted(self._adj[h])
            if attached:
                self.host_locations[h] = attached[0]
        self._check_connected()
        self._path_cache: dict[tuple, PathSet] = {}

    def _check_connected(self):
        if not self.hosts:
            return
        start = next(iter(self.hosts))
        seen = {start}
        queue = deque([start])
        while queue:
            n = queue.popleft()
            for m in self._adj[n]:
                if m not in seen:
                    seen.add(m)
                    queue.append(m)
        missing = set(self.hosts) - seen
        if missing:
            raise TopologyError(f"hosts not connected: {sorted(missing)[:5]}")

    @property
    def links(self) -> list[tuple]:
        out = []
        for key, cap in self._capacity.items():
            a, b = sorted(key)
            out.append((a, b, cap))
        return sorted(out)

    def capacity(self, link: LinkId) -> float:
        try:
            return self._capacity[frozenset(link)]
        except KeyError:
            raise TopologyError(f"unknown link {link!r}") from None

    def nic(self, host: str) -> float:
        return self.hosts[host].nic_bandwidth

    def neighbors(self, node: str) -> frozenset:
        return frozenset(self._adj[node])

    def paths_between(self, src: str, dst: str) -> PathSet:
        key = (src, dst)
        cached = self._path_cache.get(key)
        if cached is None:
            cached = self._path_cache[key] = self._compute_paths(src, dst)
        return cached

    def _compute_paths(self, src: str, dst: str) -> PathSet:
        for h in (src, dst):
            if h not in self.hosts:
                raise TopologyError(f"unknown host {h!r}")
        if src == dst:
            raise TopologyError("source and destination must differ")

        def transit(n):
            return n == src or n == dst or n not in self.hosts

        # BFS distance to dst; hosts never relay traffic
        dist = {dst: 0}
        queue = deque([dst])
        while queue:
            n = queue.popleft()
            if n != dst and n in self.hosts:
                continue
            for m in sorted(self._adj[n]):
                if m not in dist and transit(m):
                    dist[m] = dist[n] + 1
                    queue.append(m)
        if src not in dist:
            raise TopologyError(f"no path from {src} to {dst}")

        paths = []

        def walk(node, acc):
            if node == dst:
                paths.append(tuple(acc))
                return
            for m in sorted(self._adj[node]):
                if dist.get(m) == dist[node] - 1 and (m == dst or m not in self.hosts):
                    acc.append((node, m))
                    walk(m, acc)
                    acc.pop()

        walk(src, [])
        flow = nx.DiGraph()
        for path in paths:
            for link in path:
                flow.add_edge(*link, capacity=self.capacity(link))
        aggregate = nx.maximum_flow_value(flow, src, dst)
        return PathSet(src, dst, tuple(paths), float(aggregate))

    def residual(self, path, reservations: Mapping | None = None) -> float:
        reservations = reservations or {}
        return min(self.capacity(l) - reservations.get(l, 0.0) for l in path)

    def available_bandwidth(self, pathset: PathSet, reservations: Mapping | None = None) -> float:
        reservations = reservations or {}
        for link, amount in reservations.items():
            if amount < 0 or amount > self.capacity(link) + 1e-9:
                raise TopologyError(f"reservation {amount} on {link} outside [0, capacity]")
        best = max((self.residual(p, reservations) for p in pathset.paths), default=0.0)
        return max(0.0, min(best, self.nic(pathset.src), self.nic(pathset.dst)))

    def best_path(self, pathset: PathSet, reservations: Mapping | None = None):
        """Path with the largest residual capacity; earliest in path order on ties."""
        best, best_bw = None, -1.0
        for p in pathset.paths:
            bw = self.residual(p, reservations)
            if bw > best_bw + 1e-9:
                best, best_bw = p, bw
        return best, max(0.0, best_bw)

    def to_dict(self) -> dict:
        return {
            "hosts": [{"id": h, **asdict(spec)} for h, spec in sorted(self.hosts.items())],
            "switches": sorted(self.switches),
            "links": [list(l) for l in self.links],
        }

    @classmethod
    def from_dict(cls, doc: Mapping, default_host: HostSpec | None = None) -> "Topology":
        default_host = default_host or HostSpec()
        hosts = {}
        for entry in doc["hosts"]:
            if isinstance(entry, str):
                hosts[entry] = default_host
            else:
                entry = dict(entry)
                hid = entry.pop("id")
                hosts[hid] = HostSpec(**{**asdict(default_host), **entry})
        return cls(hosts, doc.get("switches", []), [tuple(l) for l in doc["links"]])


def load_topology(path) -> Topology:
    with open(path) as fh:
        return Topology.from_dict(json.load(fh))


def build_fat_tree(k: int, link_bw: float = GBPS, host_spec: HostSpec | None = None) -> Topology:
    if not isinstance(k, int) or k < 4 or k % 2:
        raise TopologyError(f"fat-tree arity must be an even integer >= 4, got {k!r}")
    host_spec = host_spec or HostSpec(nic_bandwidth=link_bw)
    half = k // 2
    cores = [f"core{i}" for i in range(half * half)]
    switches = list(cores)
    links = []
    hosts = {}
    hid = 0
    for pod in range(k):
        aggs = [f"agg{pod}_{i}" for i in range(half)]
        edges = [f"edge{pod}_{i}" for i in range(half)]
        switches += aggs + edges
        for i, agg in enumerate(aggs):
            for j in range(half):
                links.append((agg, cores[i * half + j], link_bw))
            for edge in edges:
                links.append((edge, agg, link_bw))
        for edge in edges:
            for _ in range(half):
                h = f"h{hid}"
                hid += 1
                hosts[h] = host_spec
                links.append((h, edge, host_spec.nic_bandwidth))
    return Topology(hosts, switches, links)


def build_star(hosts: Iterable[str], bw: float = GBPS, host_spec: HostSpec | None = None,
               switch: str = "s0") -> Topology:
    """All hosts on one switch (the small example topology)."""
    host_spec = host_spec or HostSpec(nic_bandwidth=bw)
    hosts = list(hosts)
    return Topology({h: host_spec for h in hosts}, [switch], [(h, switch, bw) for h in hosts])


def paths_between(t: Topology, src: str, dst: str) -> PathSet:
    return t.paths_between(src, dst)


def available_bandwidth(t: Topology, p: PathSet, reservations: Mapping | None = None) -> float:
    return t.available_bandwidth(p, reservations)

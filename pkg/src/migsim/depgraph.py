"""Resource-dependency graph over source/destination pair nodes.

The graph helpers (degeneracy ordering, clique listing, per-node maximal
independent sets, clique-set reduction) work on any adjacency mapping
``node -> set of neighbours`` whose nodes are mutually orderable, so they can
be exercised directly on small integer graphs.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from itertools import islice
from typing import Hashable, Iterable, Iterator, Mapping

from .topology import Topology, TopologyError

log = logging.getLogger(__name__)

Adjacency = Mapping[Hashable, frozenset]

_EPS = 1e-6


class GraphError(KeyError):
    pass


@dataclass(frozen=True, order=True)
class SrcDstNode:
    src: str
    dst: str

    def __post_init__(self):
        if self.src == self.dst:
            raise GraphError(f"pair node needs distinct endpoints, got {self.src}")

    def __str__(self):
        return f"{self.src}->{self.dst}"


@dataclass(frozen=True, order=True)
class Move:
    """One candidate migration. ``group`` marks mutually exclusive alternatives
    and defaults to the VM id (a VM migrates at most once per plan)."""
    vm: str
    src: str
    dst: str
    group: str | None = field(default=None, compare=False)

    @property
    def node(self) -> SrcDstNode:
        return SrcDstNode(self.src, self.dst)

    @property
    def key(self) -> str:
        return self.group if self.group is not None else self.vm

    def __str__(self):
        return f"{self.vm}:{self.src}->{self.dst}"


def _pair_dependent(t: Topology, u: SrcDstNode, v: SrcDstNode) -> bool:
    if u.src == v.src or u.dst == v.dst:
        return True
    pj, pk = t.paths_between(u.src, u.dst), t.paths_between(v.src, v.dst)
    if not (pj.links() & pk.links()):
        return False
    need_j = min(t.available_bandwidth(pj), t.nic(u.src), t.nic(u.dst))
    need_k = min(t.available_bandwidth(pk), t.nic(v.src), t.nic(v.dst))
    # independent iff some path pair leaves each migration its full demand
    for a in pj.paths:
        sa = set(a)
        for b in pk.paths:
            shared = sa.intersection(b)
            res_j = min(t.capacity(l) - (need_k if l in shared else 0.0) for l in a)
            if res_j + _EPS < need_j:
                continue
            res_k = min(t.capacity(l) - (need_j if l in shared else 0.0) for l in b)
            if res_k + _EPS >= need_k:
                return False
    return True


def is_dependent(u: SrcDstNode, v: SrcDstNode, t: Topology) -> bool:
    for h in (u.src, u.dst, v.src, v.dst):
        if h not in t.hosts:
            raise TopologyError(f"unknown host {h!r}")
    cache = t.__dict__.setdefault("_dep_cache", {})
    key = (u, v) if u <= v else (v, u)
    hit = cache.get(key)
    if hit is None:
        hit = cache[key] = _pair_dependent(t, *key)
    return hit


@dataclass(frozen=True)
class DepGraph:
    nodes: tuple
    adj: Mapping
    migrations: Mapping

    def __contains__(self, node):
        return node in self.adj

    def __len__(self):
        return len(self.nodes)

    @property
    def edges(self) -> list[tuple]:
        return sorted((u, v) for u in self.nodes for v in self.adj[u] if u < v)

    def degree(self, node) -> int:
        return len(self.adj[node])

    def node_of(self, move: Move):
        node = move.node
        if node in self.migrations and move in self.migrations[node]:
            return node
        return None

    def to_dict(self, cliques: Iterable | None = None) -> dict:
        doc = {
            "nodes": [str(n) for n in self.nodes],
            "edges": [[str(a), str(b)] for a, b in self.edges],
            "migrations": {str(n): [str(m) for m in self.migrations[n]] for n in self.nodes},
        }
        if cliques is not None:
            doc["cliques"] = [[str(n) for n in sorted(c)] for c in cliques]
        return doc

    def to_json(self, cliques=None) -> str:
        return json.dumps(self.to_dict(cliques), indent=2)


def build_dep_graph(candidates: Iterable[Move], t: Topology) -> DepGraph:
    grouped: dict[SrcDstNode, list] = {}
    for m in candidates:
        for h in (m.src, m.dst):
            if h not in t.hosts:
                raise TopologyError(f"candidate {m} references unknown host {h!r}")
        lst = grouped.setdefault(m.node, [])
        if m not in lst:
            lst.append(m)
    nodes = tuple(sorted(grouped))
    adj = {n: set() for n in nodes}
    for i, u in enumerate(nodes):
        for v in nodes[i + 1:]:
            if is_dependent(u, v, t):
                adj[u].add(v)
                adj[v].add(u)
    return DepGraph(nodes, {n: frozenset(s) for n, s in adj.items()},
                    {n: tuple(grouped[n]) for n in nodes})


def graph_from_edges(nodes: Iterable, edges: Iterable[tuple]) -> dict:
    adj = {n: set() for n in nodes}
    for a, b in edges:
        if a == b:
            continue
        adj[a].add(b)
        adj[b].add(a)
    return {n: frozenset(s) for n, s in adj.items()}


def _adjacency(g) -> Mapping:
    return g.adj if isinstance(g, DepGraph) else g


def degeneracy_order(g) -> tuple[list, int]:
    adj = _adjacency(g)
    degree = {n: len(adj[n]) for n in adj}
    remaining = set(adj)
    order, d = [], 0
    while remaining:
        n = min(remaining, key=lambda x: (degree[x], x))
        d = max(d, degree[n])
        order.append(n)
        remaining.discard(n)
        for m in adj[n]:
            if m in remaining:
                degree[m] -= 1
    return order, d


def _canonical(sets: Iterable) -> list[frozenset]:
    return sorted((frozenset(s) for s in sets), key=lambda s: (-len(s), sorted(s)))


def _bk_pivot(adj, r, p, x, out):
    if not p and not x:
        out.append(frozenset(r))
        return
    pivot = max(sorted(p | x), key=lambda u: len(p & adj[u]))
    for v in sorted(p - adj[pivot]):
        nv = adj[v]
        _bk_pivot(adj, r | {v}, p & nv, x & nv, out)
        p = p - {v}
        x = x | {v}


def all_maximal_cliques(g) -> list[frozenset]:
    """Maximal cliques via Bron-Kerbosch: degeneracy-ordered outer loop,
    Tomita pivoting below it."""
    adj = _adjacency(g)
    order, _ = degeneracy_order(adj)
    position = {n: i for i, n in enumerate(order)}
    out: list[frozenset] = []
    for v in order:
        later = {u for u in adj[v] if position[u] > position[v]}
        earlier = {u for u in adj[v] if position[u] < position[v]}
        _bk_pivot(adj, {v}, later, earlier, out)
    return _canonical(out)


def node_cliques(cliques: Iterable, v) -> list[frozenset]:
    return [c for c in cliques if v in c]


def iter_node_mis(g, v) -> Iterator[frozenset]:
    """Maximal independent sets containing ``v``.

    Drops ``v`` and its neighbours, then lists maximal cliques of the
    complement of what remains (Tomita's CLIQUES with ``subg``/``cand``),
    branching on the non-neighbours of a max-degree pivot.
    """
    adj = _adjacency(g)
    if v not in adj:
        raise GraphError(v)
    rest = set(adj) - adj[v] - {v}
    if not rest:
        yield frozenset({v})
        return
    comp = {n: frozenset(rest - adj[n] - {n}) for n in rest}

    def expand(subg, cand, q):
        pivot = max(sorted(subg), key=lambda u: (len(cand & comp[u])))
        for m in sorted(cand - comp[pivot]):
            q.append(m)
            subg_m = subg & comp[m]
            if not subg_m:
                yield frozenset((v, *q))
            else:
                cand_m = cand & comp[m]
                if cand_m:
                    yield from expand(subg_m, cand_m, q)
            q.pop()
            cand = cand - {m}

    yield from expand(frozenset(rest), frozenset(rest), [])


def node_maximal_independent_sets(g, v, limit: int | None = None) -> list[frozenset]:
    it = iter_node_mis(g, v)
    if limit is not None:
        it = islice(it, limit)
    return list(it)


def reduce_cliques(cliques: Iterable, removed: Iterable, adj_after: Mapping) -> list[frozenset]:
    """Clique set of the graph with ``removed`` nodes deleted, derived from the
    old clique set without re-enumeration."""
    removed = set(removed)
    shrunk = {frozenset(c - removed) for c in cliques}
    shrunk.discard(frozenset())
    kept = []
    for c in shrunk:
        if len(c) == 1:
            (only,) = c
            if adj_after.get(only):
                continue
        if any(c < other for other in shrunk):
            continue
        kept.append(c)
    return _canonical(kept)


def remove_nodes(g: DepGraph, removed: Iterable) -> DepGraph:
    removed = set(removed)
    nodes = tuple(n for n in g.nodes if n not in removed)
    adj = {n: g.adj[n] - removed for n in nodes}
    return DepGraph(nodes, adj, {n: g.migrations[n] for n in nodes})


def update_dep_graph(g: DepGraph, cs: Iterable, selected: Move,
                     node: SrcDstNode | None = None) -> tuple[DepGraph, list[frozenset]]:
    """Drop the selected migration and every other candidate in its exclusive
    group; nodes left without candidates leave the graph and the clique set."""
    node = node or selected.node
    if node not in g or selected not in g.migrations[node]:
        raise GraphError(f"selected migration {selected} not found under {node}")
    migrations = {}
    emptied = []
    for n in g.nodes:
        lst = tuple(m for m in g.migrations[n] if m.key != selected.key)
        if lst:
            migrations[n] = lst
        else:
            emptied.append(n)
    reduced = remove_nodes(g, emptied)
    reduced = DepGraph(reduced.nodes, reduced.adj, migrations)
    return reduced, reduce_cliques(cs, emptied, reduced.adj)

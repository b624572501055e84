"""Concurrency-aware migration selection (CAMIG) and the reference selectors.

All selectors return a :class:`MigrationPlan`. ``native`` follows the policy's
own choices, ``hosthits`` keeps the policy's VM order but spreads destinations
by hit count, ``camig`` picks among the round's best-scoring moves by single
migration cost weighted with the concurrency metric.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .depgraph import (DepGraph, Move, SrcDstNode, all_maximal_cliques, build_dep_graph,
                       node_cliques, node_maximal_independent_sets, reduce_cliques,
                       update_dep_graph)
from .migc import MigcConfig, SelectionState, interference, migc_score, migind
from .migcost import MigrationConfig, MigrationEstimate, estimate_total, normalize_exec_times
from .policies import Placement, Policy, hosthits_select
from .topology import Topology

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CamigConfig:
    delta: float = 0.0
    migc: MigcConfig = field(default_factory=MigcConfig)
    mig: MigrationConfig = field(default_factory=MigrationConfig)
    reserve_bandwidth: bool = False
    mis_limit: int = 256
    mis_samples: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.mis_limit < 1 or self.mis_samples < 1:
            raise ValueError("mis_limit and mis_samples must be positive")


@dataclass
class MigrationPlan:
    migrations: list = field(default_factory=list)   # (Move, MigrationEstimate)
    final_placement: Placement | None = None
    achieved_score: float = 0.0
    initial_score: float = 0.0
    rounds: list = field(default_factory=list)
    stop_reason: str = ""
    selector: str = ""

    @property
    def moves(self) -> list[Move]:
        return [m for m, _ in self.migrations]

    def __len__(self):
        return len(self.migrations)

    def to_dict(self) -> dict:
        return {
            "selector": self.selector,
            "initial_score": self.initial_score,
            "achieved_score": self.achieved_score,
            "stop_reason": self.stop_reason,
            "migrations": [
                {"vm": m.vm, "src": m.src, "dst": m.dst, "t_total": e.t_total,
                 "downtime": e.downtime, "rounds": e.rounds, "transferred": e.transferred}
                for m, e in self.migrations],
            "rounds": self.rounds,
        }


def estimate_move(p: Placement, m: Move, t: Topology, cfg: MigrationConfig,
                  reservations=None) -> MigrationEstimate | None:
    bw = t.available_bandwidth(t.paths_between(m.src, m.dst), reservations)
    if bw <= 0:
        return None
    return estimate_total(p.vms[m.vm], bw, cfg)


def get_mig_candidates(current: Placement, policy: Policy, delta: float = 0.0,
                       moves=None, moved=frozenset()) -> tuple[float | None, list[tuple[Move, float]]]:
    """Best post-move score and every candidate within ``delta`` of it."""
    if moves is None:
        moves = policy.candidate_moves(current, moved)
    scored = [(m, policy.objective.score_move(current, m)) for m in moves]
    if not scored:
        return None, []
    best = min(s for _, s in scored)
    if math.isinf(delta):
        return best, scored
    return best, [(m, s) for m, s in scored if s <= best + delta + 1e-12]


def refresh_single_interference(candidates, p: Placement, t: Topology, cfg: MigrationConfig,
                                reservations=None) -> tuple[dict, dict]:
    """Normalized and raw execution times per candidate at current bandwidth."""
    raw = {}
    for m in candidates:
        est = estimate_move(p, m, t, cfg, reservations)
        if est is None:
            log.warning("dropping %s: no bandwidth left between %s and %s", m, m.src, m.dst)
            continue
        raw[m] = est
    if not raw:
        return {}, {}
    return normalize_exec_times({m: e.t_total for m, e in raw.items()}), raw


def _reserve(reservations: dict, t: Topology, m: Move, bw: float):
    path, _ = t.best_path(t.paths_between(m.src, m.dst), reservations)
    for link in path:
        reservations[link] = reservations.get(link, 0.0) + bw


def _sample_mis(adj, v, count, rng) -> list[frozenset]:
    """Random greedy maximal independent sets through ``v``."""
    rest = sorted(set(adj) - adj[v] - {v})
    out = set()
    for _ in range(count):
        order = list(rest)
        rng.shuffle(order)
        chosen, blocked = {v}, set(adj[v])
        for n in order:
            if n not in blocked:
                chosen.add(n)
                blocked |= adj[n]
        out.add(frozenset(chosen))
    return sorted(out, key=lambda s: (-len(s), sorted(s)))


class _Scorer:
    """Node-level clique/MIS bookkeeping for one planning session.

    MIGC is evaluated on the live graph plus the already-selected nodes, so
    the selection history stays visible to the incidence counts even after
    a selected node runs out of candidates."""

    def __init__(self, g: DepGraph, cfg: CamigConfig):
        self.full = {n: set(g.adj[n]) for n in g.nodes}
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.kept: set = set(g.nodes)
        self._mis = {}
        self._refresh()
        self.cliques = all_maximal_cliques(self.adj)

    def _refresh(self):
        self.adj = {n: frozenset(self.full[n] & self.kept) for n in self.kept}
        self._mis = {}

    def extend(self, g: DepGraph):
        for n in g.nodes:
            if n not in self.full:
                self.full[n] = set()
            self.full[n] |= set(g.adj[n])
            for u in g.adj[n]:
                self.full.setdefault(u, set()).add(n)
        self.kept |= set(g.nodes)
        self._refresh()
        self.cliques = all_maximal_cliques(self.adj)

    def drop(self, removed, selected_nodes):
        removed = set(removed) - set(selected_nodes) & self.kept
        if not removed:
            return
        self.kept -= removed
        self._refresh()
        self.cliques = reduce_cliques(self.cliques, removed, self.adj)

    def mis(self, v):
        if v not in self._mis:
            adj = self.adj
            sets = node_maximal_independent_sets(adj, v, self.cfg.mis_limit + 1)
            if len(sets) > self.cfg.mis_limit:
                log.info("MIS count through %s exceeds %d; sampling", v, self.cfg.mis_limit)
                sets = _sample_mis(adj, v, self.cfg.mis_samples, self.rng)
            self._mis[v] = sets
        return self._mis[v]

    def score_nodes(self, nodes, state: SelectionState) -> dict:
        nodes = sorted(set(nodes))
        if not len(state):
            return {v: migc_score(v, state, node_cliques(self.cliques, v), self.mis(v),
                                  cfg=self.cfg.migc) for v in nodes}
        inds = {v: migind(v, state, self.mis(v)) for v in nodes}
        nonzero = [x for x in inds.values() if x > 0]
        floor = min(nonzero) if nonzero else None
        return {v: migc_score(v, state, node_cliques(self.cliques, v), self.mis(v), floor,
                              cfg=self.cfg.migc) for v in nodes}


def _finish(plan: MigrationPlan, p: Placement, policy: Policy, reason: str) -> MigrationPlan:
    plan.final_placement = p
    plan.achieved_score = policy.objective.score(p)
    plan.stop_reason = reason
    return plan


def run_camig(initial: Placement, policy: Policy, t: Topology,
              cfg: CamigConfig = CamigConfig()) -> MigrationPlan:
    p, moved = initial, set()
    score = policy.objective.score(p)
    plan = MigrationPlan(initial_score=score, selector="camig")
    if policy.done(p, moved):
        return _finish(plan, p, policy, "objective")
    first = policy.candidate_moves(p, moved)
    if not first:
        return _finish(plan, p, policy, "no-candidates")
    g = build_dep_graph(first, t)
    scorer = _Scorer(g, cfg)
    potential = {m.key for m in first}
    state = SelectionState()
    reservations: dict = {}
    while True:
        if policy.done(p, moved):
            return _finish(plan, p, policy, "objective")
        if len(plan) >= len(potential):
            return _finish(plan, p, policy, "round-limit")
        moves = policy.candidate_moves(p, moved)
        fresh = [m for m in moves if g.node_of(m) is None]
        if fresh:
            log.debug("round %d: %d new candidate moves, rebuilding graph", len(plan), len(fresh))
            g = build_dep_graph([*(m for n in g.nodes for m in g.migrations[n]), *fresh], t)
            scorer.extend(g)
            potential |= {m.key for m in fresh}
        if not policy.mandatory:
            moves = [m for m in moves if policy.objective.improves(policy.objective.score_move(p, m), score)]
            if not moves:
                return _finish(plan, p, policy, "no-improvement")
        best, cands = get_mig_candidates(p, policy, cfg.delta, moves)
        if not cands:
            return _finish(plan, p, policy, "no-candidates")
        norm, raw = refresh_single_interference([m for m, _ in cands], p, t, cfg.mig,
                                                reservations if cfg.reserve_bandwidth else None)
        if not norm:
            return _finish(plan, p, policy, "no-bandwidth")
        obj = dict(cands)
        # only zero-cost candidates can reach the minimal (zero) interference
        lo = min(norm.values())
        nodes = {m.node for m in norm if norm[m] <= lo}
        migc = scorer.score_nodes(nodes, state) if len(nodes) > 1 else {n: 0.0 for n in nodes}
        inter = {m: interference(norm[m], migc[m.node], cfg.migc) for m in norm if m.node in migc}
        chosen = min(inter, key=lambda m: (inter[m], migc[m.node], norm[m], m.vm, m.dst))
        plan.rounds.append({
            "round": len(plan),
            "best_score": best,
            "candidates": [
                {"vm": m.vm, "src": m.src, "dst": m.dst, "node": str(m.node), "score": obj[m],
                 "exec": raw[m].t_total, "norm_exec": norm[m], "migc": migc.get(m.node),
                 "interference": inter.get(m)}
                for m in sorted(norm)],
            "chosen": {"vm": chosen.vm, "src": chosen.src, "dst": chosen.dst, "node": str(chosen.node)},
        })
        plan.migrations.append((chosen, raw[chosen]))
        if cfg.reserve_bandwidth:
            _reserve(reservations, t, chosen, raw[chosen].bandwidth)
        p = p.apply(chosen)
        moved.add(chosen.key)
        score = policy.objective.score(p)
        state.add(str(chosen), chosen.node)
        before = set(g.nodes)
        g, _ = update_dep_graph(g, [], chosen)
        scorer.drop(before - set(g.nodes), state.selected_nodes)


def run_native(initial: Placement, policy: Policy, t: Topology,
               mig: MigrationConfig = MigrationConfig()) -> MigrationPlan:
    p, moved = initial, set()
    plan = MigrationPlan(initial_score=policy.objective.score(p), selector="native")
    while True:
        if policy.done(p, moved):
            return _finish(plan, p, policy, "objective")
        if len(plan) >= len(p.vms):
            return _finish(plan, p, policy, "round-limit")
        m = policy.native_move(p, moved)
        if m is None:
            return _finish(plan, p, policy, "no-candidates")
        est = estimate_move(p, m, t, mig)
        if est is None:
            return _finish(plan, p, policy, "no-bandwidth")
        plan.migrations.append((m, est))
        p = p.apply(m)
        moved.add(m.key)


def run_hosthits(initial: Placement, policy: Policy, t: Topology, delta: float = 0.0,
                 mig: MigrationConfig = MigrationConfig()) -> MigrationPlan:
    """Policy VM order; destination = least-hit host among the best-scoring ones."""
    p, moved, hits = initial, set(), {}
    plan = MigrationPlan(initial_score=policy.objective.score(p), selector="hosthits")
    while True:
        if policy.done(p, moved):
            return _finish(plan, p, policy, "objective")
        if len(plan) >= len(p.vms):
            return _finish(plan, p, policy, "round-limit")
        native = policy.native_move(p, moved)
        if native is None:
            return _finish(plan, p, policy, "no-candidates")
        if policy.mandatory:
            dests = policy.destinations(p, native.vm)
        else:
            same = [m for m in policy.candidate_moves(p, moved) if m.vm == native.vm] or [native]
            _, cands = get_mig_candidates(p, policy, delta, same)
            dests = [m.dst for m, _ in cands]
        m = Move(native.vm, native.src, hosthits_select(sorted(dests), hits), native.group)
        est = estimate_move(p, m, t, mig)
        if est is None:
            return _finish(plan, p, policy, "no-bandwidth")
        plan.migrations.append((m, est))
        p = p.apply(m)
        moved.add(m.key)


def select(selector: str, initial: Placement, policy: Policy, t: Topology,
           cfg: CamigConfig = CamigConfig()) -> MigrationPlan:
    if selector == "camig":
        return run_camig(initial, policy, t, cfg)
    if selector == "hosthits":
        return run_hosthits(initial, policy, t, cfg.delta, cfg.mig)
    if selector in ("native", "native+sch", "one-by-one"):
        plan = run_native(initial, policy, t, cfg.mig)
        plan.selector = selector
        return plan
    if selector == "nomig":
        return MigrationPlan(final_placement=initial, achieved_score=policy.objective.score(initial),
                             initial_score=policy.objective.score(initial), stop_reason="nomig",
                             selector="nomig")
    raise ValueError(f"unknown selector {selector!r}; expected one of {', '.join(SELECTORS)}")


SELECTORS = ("native", "native+sch", "one-by-one", "hosthits", "camig", "nomig")

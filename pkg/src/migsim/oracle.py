"""Exact solver for small joint placement/concurrency instances.

An assignment maps every VM to its final host. Its value is the summed
normalized execution time of the moved VMs, plus ``t_i + t_j`` for each
unordered pair of moved VMs whose (src, dst) pairs are dependent.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .depgraph import Move, SrcDstNode, is_dependent
from .migcost import MigrationConfig, VmSpec, estimate_total, normalize_exec_times
from .policies import Placement, Policy, PolicyObjective
from .topology import GB, HostSpec, Topology

SEARCH_LIMIT = 10 ** 7


class OracleError(ValueError):
    pass


@dataclass
class MipInstance:
    vms: list
    initial: dict                 # vm -> host
    weights: dict                 # vm -> load
    hosts: list
    capacity: dict                # host -> load capacity
    allowed: dict                 # vm -> permitted destinations (besides staying)
    exec_time: dict               # (vm, dst) -> normalized time
    dependent: Callable = field(default=lambda a, b: a.src == b.src or a.dst == b.dst, repr=False)
    form: str = "spread"          # "spread": max-min utilization <= eps; "target": |std - target| <= eps
    eps: float = math.inf
    target: float = 0.0

    def __post_init__(self):
        hs = set(self.hosts)
        for vm in self.vms:
            if self.initial[vm] not in hs:
                raise OracleError(f"{vm} starts on unknown host {self.initial[vm]!r}")
            if not set(self.allowed.get(vm, ())) <= hs:
                raise OracleError(f"{vm} allows unknown destinations")
            for d in self.allowed.get(vm, ()):
                if d != self.initial[vm] and (vm, d) not in self.exec_time:
                    raise OracleError(f"missing exec time for ({vm}, {d})")
        if self.form not in ("spread", "target"):
            raise OracleError(f"unknown objective form {self.form!r}")

    def options(self, vm) -> list:
        stay = self.initial[vm]
        return [stay] + sorted(d for d in set(self.allowed.get(vm, ())) if d != stay)

    def utilization(self, assignment: Mapping) -> dict:
        load = {h: 0.0 for h in self.hosts}
        for vm in self.vms:
            load[assignment[vm]] += self.weights[vm]
        return {h: load[h] / self.capacity[h] for h in self.hosts}

    def in_band(self, assignment: Mapping) -> bool:
        u = list(self.utilization(assignment).values())
        if not u:
            return True
        if self.form == "spread":
            return max(u) - min(u) <= self.eps + 1e-9
        mean = sum(u) / len(u)
        std = math.sqrt(sum((x - mean) ** 2 for x in u) / len(u))
        return abs(std - self.target) <= self.eps + 1e-9


def feasible(inst: MipInstance, assignment: Mapping) -> bool:
    if set(assignment) != set(inst.vms):
        return False
    load = {h: 0.0 for h in inst.hosts}
    for vm in inst.vms:
        h = assignment[vm]
        if h not in load or (h != inst.initial[vm] and h not in inst.allowed.get(vm, ())):
            return False
        load[h] += inst.weights[vm]
    if any(load[h] > inst.capacity[h] + 1e-9 for h in inst.hosts):
        return False
    return inst.in_band(assignment)


def moved_pairs(inst: MipInstance, assignment: Mapping) -> list:
    moved = [vm for vm in inst.vms if assignment[vm] != inst.initial[vm]]
    return [(a, b) for a, b in itertools.combinations(moved, 2)
            if inst.dependent(SrcDstNode(inst.initial[a], assignment[a]),
                              SrcDstNode(inst.initial[b], assignment[b]))]


def inter_single(inst: MipInstance, assignment: Mapping) -> float:
    return sum(inst.exec_time[(vm, assignment[vm])] for vm in inst.vms
               if assignment[vm] != inst.initial[vm])


def inter_multi(inst: MipInstance, assignment: Mapping) -> float:
    return sum(inst.exec_time[(a, assignment[a])] + inst.exec_time[(b, assignment[b])]
               for a, b in moved_pairs(inst, assignment))


def objective_value(inst: MipInstance, assignment: Mapping) -> float:
    if not feasible(inst, assignment):
        raise OracleError("assignment is infeasible")
    return inter_single(inst, assignment) + inter_multi(inst, assignment)


def solve_exhaustive(inst: MipInstance) -> tuple[dict, float]:
    opts = [inst.options(vm) for vm in inst.vms]
    size = math.prod(len(o) for o in opts)
    if size > SEARCH_LIMIT:
        raise OracleError(f"search space {size} exceeds {SEARCH_LIMIT}")
    best, best_key = None, None
    for combo in itertools.product(*opts):
        a = dict(zip(inst.vms, combo))
        if not feasible(inst, a):
            continue
        key = (round(objective_value(inst, a), 12), combo)
        if best_key is None or key < best_key:
            best, best_key = a, key
    if best is None:
        raise OracleError("no feasible assignment")
    return best, best_key[0]


def instance_from_placement(p: Placement, t: Topology, allowed: Mapping | None = None,
                            eps: float = math.inf, mig: MigrationConfig = MigrationConfig()) -> MipInstance:
    """Instance whose weights are CPU demands and whose exec times come from the
    cost model at idle-network bandwidth, min-max normalized over all pairs."""
    hosts = sorted(p.hosts)
    vms = sorted(p.vms)
    allowed = {vm: sorted(h for h in (allowed or {}).get(vm, hosts) if h != p.vm_to_host[vm]) for vm in vms}
    raw = {}
    for vm in vms:
        for d in allowed[vm]:
            bw = t.available_bandwidth(t.paths_between(p.vm_to_host[vm], d))
            raw[(vm, d)] = estimate_total(p.vms[vm], bw, mig).t_total
    norm = normalize_exec_times(raw) if raw else {}
    return MipInstance(vms=vms, initial=dict(p.vm_to_host), weights=dict(p.cpu), hosts=hosts,
                       capacity={h: p.hosts[h].cpu_total_mips for h in hosts}, allowed=allowed,
                       exec_time=norm, dependent=lambda a, b: is_dependent(a, b, t), eps=eps)


class InstancePolicy(Policy):
    """Every allowed, capacity-feasible single move is a candidate."""
    name = "instance"

    def __init__(self, inst: MipInstance):
        obj = PolicyObjective(spread=inst.eps) if inst.form == "spread" else \
            PolicyObjective(target=inst.target, tolerance=inst.eps)
        super().__init__(obj, upper=1.0, lower=0.0)
        self.inst = inst

    def candidate_moves(self, p, moved=frozenset()):
        out = []
        for vm in self.inst.vms:
            if vm in moved:
                continue
            src = p.vm_to_host[vm]
            out += [Move(vm, src, d) for d in self.inst.allowed.get(vm, ()) if p.fits(vm, d)]
        return out

    def native_move(self, p, moved=frozenset()):
        cands = self.candidate_moves(p, moved)
        if not cands:
            return None
        return min(cands, key=lambda m: (self.objective.score_move(p, m), m.vm, m.dst))


def placement_from_instance(inst: MipInstance) -> Placement:
    hosts = {h: HostSpec(cpu_total_mips=inst.capacity[h], memory=1e6 * GB) for h in inst.hosts}
    vms = {vm: VmSpec(memory=1 * GB, cpu_demand=inst.weights[vm]) for vm in inst.vms}
    return Placement(hosts, vms, inst.initial)


def load_instance(path) -> MipInstance:
    """JSON instance. ``dependent`` is either ``"endpoints"`` (shared source or
    destination) or a list of ``[[s1, d1], [s2, d2]]`` dependent pair nodes."""
    doc = json.loads(Path(path).read_text())
    return instance_from_dict(doc)


def instance_from_dict(doc: Mapping) -> MipInstance:
    try:
        exec_time = {(e[0], e[1]): float(e[2]) for e in doc["exec_time"]}
        dep = doc.get("dependent", "endpoints")
        if dep == "endpoints":
            pred = lambda a, b: a.src == b.src or a.dst == b.dst
        else:
            edges = set()
            for (s1, d1), (s2, d2) in dep:
                u, v = SrcDstNode(s1, d1), SrcDstNode(s2, d2)
                edges |= {(u, v), (v, u)}
            pred = lambda a, b: a == b or (a, b) in edges
        return MipInstance(
            vms=list(doc["vms"]), initial=dict(doc["initial"]), weights=dict(doc["weights"]),
            hosts=list(doc["hosts"]), capacity=dict(doc["capacity"]),
            allowed={k: list(v) for k, v in doc["allowed"].items()}, exec_time=exec_time,
            dependent=pred, form=doc.get("form", "spread"),
            eps=float(doc.get("eps", math.inf)), target=float(doc.get("target", 0.0)))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, OracleError):
            raise
        raise OracleError(f"malformed instance: {e}") from None

"""Placement state, management objectives and the baseline selection policies.

Every policy exposes the same candidate interface (``sources``, ``vms``,
``destinations``, ``candidate_moves``) so a selector can take over VM and/or
destination choice, plus ``native_move`` for the policy's own behaviour.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .depgraph import Move
from .energy import EnergyModel
from .migcost import MigrationConfig, VmSpec, estimate_total, normalize_exec_times
from .topology import GB, HostSpec, Topology

log = logging.getLogger(__name__)


class PlacementError(ValueError):
    pass


class Placement:
    def __init__(self, hosts: Mapping[str, HostSpec], vms: Mapping[str, VmSpec],
                 vm_to_host: Mapping[str, str], cpu: Mapping[str, float] | None = None):
        self.hosts = dict(hosts)
        self.vms = dict(vms)
        self.vm_to_host = dict(vm_to_host)
        if set(self.vm_to_host) != set(self.vms):
            raise PlacementError("every VM needs exactly one host")
        for vm, h in self.vm_to_host.items():
            if h not in self.hosts:
                raise PlacementError(f"VM {vm} placed on unknown host {h}")
        self.cpu = {vm: (cpu or {}).get(vm, spec.cpu_demand) for vm, spec in self.vms.items()}
        self._cpu_used = {h: 0.0 for h in self.hosts}
        self._mem_used = {h: 0.0 for h in self.hosts}
        self._count = {h: 0 for h in self.hosts}
        for vm, h in self.vm_to_host.items():
            self._cpu_used[h] += self.cpu[vm]
            self._mem_used[h] += self.vms[vm].memory
            self._count[h] += 1

    def copy(self) -> "Placement":
        new = object.__new__(Placement)
        new.hosts, new.vms = self.hosts, self.vms
        new.vm_to_host = dict(self.vm_to_host)
        new.cpu = self.cpu
        new._cpu_used = dict(self._cpu_used)
        new._mem_used = dict(self._mem_used)
        new._count = dict(self._count)
        return new

    def apply(self, move: Move) -> "Placement":
        if self.vm_to_host.get(move.vm) != move.src:
            raise PlacementError(f"{move.vm} is not on {move.src}")
        if move.dst not in self.hosts:
            raise PlacementError(f"unknown destination {move.dst}")
        new = self.copy()
        new.vm_to_host[move.vm] = move.dst
        c, m = self.cpu[move.vm], self.vms[move.vm].memory
        new._cpu_used[move.src] -= c
        new._cpu_used[move.dst] += c
        new._mem_used[move.src] -= m
        new._mem_used[move.dst] += m
        new._count[move.src] -= 1
        new._count[move.dst] += 1
        return new

    def with_cpu(self, cpu: Mapping[str, float]) -> "Placement":
        return Placement(self.hosts, self.vms, self.vm_to_host, cpu)

    def host_vms(self, host: str) -> list[str]:
        return sorted(vm for vm, h in self.vm_to_host.items() if h == host)

    def vm_count(self, host: str) -> int:
        return self._count[host]

    def active(self, host: str) -> bool:
        return self._count[host] > 0

    def cpu_used(self, host: str) -> float:
        return self._cpu_used[host]

    def cpu_util(self, host: str) -> float:
        return self._cpu_used[host] / self.hosts[host].cpu_total_mips

    def mem_used(self, host: str) -> float:
        return self._mem_used[host]

    def mem_util(self, host: str) -> float:
        return self._mem_used[host] / self.hosts[host].memory

    def vm_cpu_share(self, vm: str, host: str | None = None) -> float:
        host = host or self.vm_to_host[vm]
        return self.cpu[vm] / self.hosts[host].cpu_total_mips

    def fits(self, vm: str, host: str, cpu_limit: float = 1.0) -> bool:
        if self.vm_to_host[vm] == host:
            return False
        cap = self.hosts[host]
        cpu = self._cpu_used[host] + self.cpu[vm]
        mem = self._mem_used[host] + self.vms[vm].memory
        return cpu <= cpu_limit * cap.cpu_total_mips + 1e-9 and mem <= cap.memory + 1e-9

    def feasible(self) -> bool:
        return all(self._cpu_used[h] <= c.cpu_total_mips + 1e-9 and self._mem_used[h] <= c.memory + 1e-9
                   for h, c in self.hosts.items())

    @property
    def host_load(self) -> dict:
        return {h: (self.cpu_util(h), self._mem_used[h], 0.0) for h in sorted(self.hosts)}

    def utilizations(self) -> list[float]:
        return [self.cpu_util(h) for h in sorted(self.hosts)]


@dataclass
class PolicyObjective:
    kind: str = "load-balance"
    target: float = 0.0
    tolerance: float | None = None
    band: tuple | None = None
    spread: float | None = None
    energy: EnergyModel = field(default_factory=EnergyModel)

    def __post_init__(self):
        if self.kind not in ("load-balance", "energy"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.tolerance is not None and self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")

    def score(self, p: Placement) -> float:
        if self.kind == "energy":
            return sum(self.energy.host_power(p.cpu_util(h)) for h in p.hosts if p.active(h))
        utils = p.utilizations()
        return float(np.std(utils)) if utils else 0.0

    def score_move(self, p: Placement, move: Move) -> float:
        """Score of ``p`` after ``move`` without materializing the placement."""
        if self.kind == "energy":
            return self.score(p.apply(move))
        share = p.cpu[move.vm]
        utils = []
        for h in sorted(p.hosts):
            used = p.cpu_used(h) - share * (h == move.src) + share * (h == move.dst)
            utils.append(used / p.hosts[h].cpu_total_mips)
        return float(np.std(utils))

    def satisfied(self, p: Placement) -> bool:
        checks = []
        if self.band is not None:
            lo, hi = self.band
            checks.append(all(lo - 1e-9 <= u <= hi + 1e-9 for u in p.utilizations()))
        if self.spread is not None:
            utils = p.utilizations()
            checks.append(not utils or max(utils) - min(utils) <= self.spread + 1e-9)
        if self.tolerance is not None or not checks:
            checks.append(abs(self.score(p) - self.target) <= (self.tolerance or 0.0) + 1e-12)
        return all(checks)

    @staticmethod
    def improves(new: float, old: float) -> bool:
        return new < old - 1e-12


def objective_score(p: Placement, obj: PolicyObjective) -> float:
    return obj.score(p)


def volume(cpu: float, net: float, mem: float) -> float:
    clamp = lambda x: min(max(x, 0.0), 0.99)
    return 1.0 / ((1 - clamp(cpu)) * (1 - clamp(net)) * (1 - clamp(mem)))


class Policy:
    name = "base"
    mandatory = False

    def __init__(self, objective: PolicyObjective | None = None, upper: float = 0.55,
                 lower: float = 0.45, vm_depth: int | None = None):
        self.objective = objective or PolicyObjective(band=(lower, upper))
        self.upper, self.lower = upper, lower
        self.vm_depth = vm_depth

    def sources(self, p: Placement) -> list[str]:
        return sorted((h for h in p.hosts if p.cpu_util(h) > self.upper + 1e-9),
                      key=lambda h: (-p.cpu_util(h), h))

    def vms(self, p: Placement, source: str, moved=frozenset()) -> list[str]:
        return [vm for vm in p.host_vms(source) if vm not in moved]

    def destinations(self, p: Placement, vm: str) -> list[str]:
        return sorted((h for h in p.hosts if p.fits(vm, h, self.upper)),
                      key=lambda h: (p.cpu_util(h), h))

    def candidate_moves(self, p: Placement, moved=frozenset()) -> list[Move]:
        out = []
        for src in self.sources(p):
            vms = self.vms(p, src, moved)
            if self.vm_depth is not None:
                vms = vms[:self.vm_depth]
            for vm in vms:
                out.extend(Move(vm, src, d) for d in self.destinations(p, vm))
        return out

    def native_move(self, p: Placement, moved=frozenset()) -> Move | None:
        for src in self.sources(p):
            for vm in self.vms(p, src, moved):
                dests = self.destinations(p, vm)
                if dests:
                    return Move(vm, src, dests[0])
                log.debug("%s: no destination fits %s", self.name, vm)
        return None

    def done(self, p: Placement, moved=frozenset()) -> bool:
        return self.objective.satisfied(p)

    def potential_vms(self, p: Placement, moved=frozenset()) -> set:
        return {m.vm for m in self.candidate_moves(p, moved)}


class SandpiperPolicy(Policy):
    name = "sandpiper"

    def host_volume(self, p: Placement, h: str) -> float:
        return volume(p.cpu_util(h), 0.0, p.mem_util(h))

    def vm_volume(self, p: Placement, vm: str) -> float:
        h = p.vm_to_host[vm]
        return volume(p.vm_cpu_share(vm), 0.0, p.vms[vm].memory / p.hosts[h].memory)

    def sources(self, p):
        return sorted((h for h in p.hosts if p.cpu_util(h) > self.upper + 1e-9),
                      key=lambda h: (-self.host_volume(p, h), h))

    def vms(self, p, source, moved=frozenset()):
        vms = [vm for vm in p.host_vms(source) if vm not in moved]
        return sorted(vms, key=lambda vm: (-self.vm_volume(p, vm) / (p.vms[vm].memory / GB), vm))

    def destinations(self, p, vm):
        return sorted((h for h in p.hosts if p.fits(vm, h, self.upper)),
                      key=lambda h: (self.host_volume(p, h), h))


def sandpiper_candidates(p: Placement, cfg: Mapping | None = None):
    pol = SandpiperPolicy(**(cfg or {}))
    srcs = pol.sources(p)
    choices = {s: pol.vms(p, s) for s in srcs}
    dests = {vm: pol.destinations(p, vm) for s in srcs for vm in choices[s]}
    return srcs, choices, dests


class FfdPolicy(Policy):
    name = "ffd"

    def vms(self, p, source, moved=frozenset()):
        vms = [vm for vm in p.host_vms(source) if vm not in moved]
        return sorted(vms, key=lambda vm: (p.vms[vm].memory, vm))

    def destinations(self, p, vm):
        under = [h for h in p.hosts if p.cpu_util(h) < self.lower - 1e-9 and p.fits(vm, h, self.upper)]
        return sorted(under, key=lambda h: (-(1 - p.cpu_util(h)), h))


class IAwarePolicy(Policy):
    name = "iaware"

    def __init__(self, objective=None, upper=0.55, lower=0.45, vm_depth=None,
                 topology: Topology | None = None, mig: MigrationConfig | None = None,
                 weights: tuple = (0.5, 0.5)):
        super().__init__(objective, upper, lower, vm_depth)
        self.topology = topology
        self.mig = mig or MigrationConfig()
        self.weights = weights

    def exec_time(self, p: Placement, vm: str, dst: str) -> float:
        src = p.vm_to_host[vm]
        if self.topology is None:
            bw = min(p.hosts[src].nic_bandwidth, p.hosts[dst].nic_bandwidth)
        else:
            bw = self.topology.available_bandwidth(self.topology.paths_between(src, dst))
        return estimate_total(p.vms[vm], bw, self.mig).t_total

    def vms(self, p, source, moved=frozenset()):
        # cheapest to move first, judged at the source NIC
        vms = [vm for vm in p.host_vms(source) if vm not in moved]
        nic = p.hosts[source].nic_bandwidth
        return sorted(vms, key=lambda vm: (estimate_total(p.vms[vm], nic, self.mig).t_total, vm))

    def native_move(self, p, moved=frozenset()):
        cands = Policy.candidate_moves(self, p, moved)
        if not cands:
            return None
        return iaware_pick(cands, {m: self.exec_time(p, m.vm, m.dst) for m in cands},
                           {m: p.vm_count(m.dst) for m in cands}, self.weights)


def iaware_pick(cands: Sequence[Move], exec_times: Mapping, dest_counts: Mapping,
                weights=(0.5, 0.5)) -> Move:
    ne = normalize_exec_times({m: exec_times[m] for m in cands})
    nc = normalize_exec_times({m: float(dest_counts[m]) for m in cands})
    w1, w2 = weights
    return min(cands, key=lambda m: (w1 * ne[m] + w2 * nc[m], m.vm, m.dst))


def _native_plan(policy: Policy, p: Placement, limit: int | None = None) -> list[Move]:
    moved, plan = set(), []
    limit = len(p.vms) if limit is None else limit
    while len(plan) < limit:
        m = policy.native_move(p, moved)
        if m is None:
            break
        plan.append(m)
        moved.add(m.vm)
        p = p.apply(m)
    return plan


def ffd_candidates(p: Placement, cfg: Mapping | None = None) -> list[Move]:
    return _native_plan(FfdPolicy(**(cfg or {})), p)


def iaware_candidates(p: Placement, t: Topology | None = None, cfg: Mapping | None = None) -> list[Move]:
    return _native_plan(IAwarePolicy(topology=t, **(cfg or {})), p)


def hosthits_select(equivalent_destinations: Sequence[str], hit_counts: dict) -> str:
    if not equivalent_destinations:
        raise ValueError("no destinations to choose from")
    choice = min(equivalent_destinations, key=lambda h: (hit_counts.get(h, 0), h))
    hit_counts[choice] = hit_counts.get(choice, 0) + 1
    return choice


def lr_predict(samples: Sequence[float], window: int = 10) -> float | None:
    """Least-squares line over the last ``window`` samples, extrapolated one step."""
    if len(samples) < window:
        return None
    y = np.asarray(samples[-window:], dtype=float)
    x = np.arange(window, dtype=float) - (window - 1) / 2
    # centred abscissa keeps a flat series exact
    slope = float(x @ (y - y.mean()) / (x @ x)) if window > 1 else 0.0
    return float(y.mean() + slope * (window + 1) / 2)


class LrMmtPolicy(Policy):
    """Local-regression overload detection, minimum-migration-time VM choice,
    underload evacuation, energy-aware first-fit destinations.

    The VM list is fixed when the policy is bound to a placement; selectors
    only re-choose destinations (``mandatory``)."""
    name = "lrmmt"
    mandatory = True

    def __init__(self, objective=None, history: Mapping | None = None, window: int = 10,
                 safety: float = 1.2, under: float = 0.3, upper: float = 0.8,
                 topology: Topology | None = None, mig: MigrationConfig | None = None):
        objective = objective or PolicyObjective(kind="energy")
        super().__init__(objective, upper=upper, lower=under)
        self.history = history or {}
        self.window, self.safety, self.under = window, safety, under
        self.topology = topology
        self.mig = mig or MigrationConfig()
        self.pending: list[tuple[str, str]] = []
        self.native: list[Move] = []
        self.overloaded: set = set()
        self.evacuating: set = set()

    def migration_time(self, p: Placement, vm: str) -> float:
        bw = p.hosts[p.vm_to_host[vm]].nic_bandwidth
        return estimate_total(p.vms[vm], bw, self.mig).t_total

    def is_overloaded(self, host: str) -> bool:
        pred = lr_predict(self.history.get(host, ()), self.window)
        return pred is not None and self.safety * pred >= 1.0

    def power_increase(self, p: Placement, vm: str, h: str) -> float:
        e = self.objective.energy
        before = e.host_power(p.cpu_util(h), p.active(h))
        after = e.host_power(p.cpu_util(h) + p.cpu[vm] / p.hosts[h].cpu_total_mips)
        return after - before

    def _allowed(self, p, vm, allow_inactive=True):
        out = []
        for h in p.hosts:
            if h in self.overloaded or h in self.evacuating or h == p.vm_to_host[vm]:
                continue
            if not allow_inactive and not p.active(h):
                continue
            if p.fits(vm, h, self.upper):
                out.append(h)
        return out

    def ranked_destinations(self, p, vm, allow_inactive=True):
        return sorted(self._allowed(p, vm, allow_inactive),
                      key=lambda h: (round(self.power_increase(p, vm, h), 9), h))

    def destinations(self, p, vm):
        """Energy-equivalent destinations: every allowed host sharing the minimal
        power increase."""
        ranked = self.ranked_destinations(p, vm)
        if not ranked:
            return []
        best = self.power_increase(p, vm, ranked[0])
        return [h for h in ranked if self.power_increase(p, vm, h) <= best + 1e-9]

    def bind(self, p: Placement) -> list[Move]:
        """Select the VMs to migrate and a first-fit plan for them."""
        self.overloaded = {h for h in p.hosts if p.active(h) and self.is_overloaded(h)}
        self.evacuating = set()
        pending, plan = [], []
        virt = p
        for h in sorted(self.overloaded):
            pred = lr_predict(self.history[h], self.window)
            vms = sorted(virt.host_vms(h), key=lambda vm: (self.migration_time(virt, vm), vm))
            for vm in vms:
                if self.safety * pred < 1.0:
                    break
                dests = self.ranked_destinations(virt, vm)
                if not dests:
                    log.warning("lrmmt: no destination for %s from overloaded %s", vm, h)
                    continue
                m = Move(vm, h, dests[0])
                pred -= virt.vm_cpu_share(vm)
                virt = virt.apply(m)
                pending.append((vm, h))
                plan.append(m)
        receivers = {m.dst for m in plan}
        under = sorted((h for h in p.hosts if virt.active(h) and h not in self.overloaded
                        and h not in receivers and virt.cpu_util(h) < self.under),
                       key=lambda h: (virt.cpu_util(h), h))
        for h in under:
            if h in receivers:
                continue
            self.evacuating.add(h)
            trial, moves = virt, []
            for vm in sorted(trial.host_vms(h), key=lambda vm: (-trial.cpu[vm], vm)):
                dests = self.ranked_destinations(trial, vm, allow_inactive=False)
                if not dests:
                    break
                moves.append(Move(vm, h, dests[0]))
                trial = trial.apply(moves[-1])
            if moves and len(moves) == virt.vm_count(h):
                virt = trial
                plan.extend(moves)
                pending.extend((m.vm, h) for m in moves)
                receivers.update(m.dst for m in moves)
            else:
                self.evacuating.discard(h)
        self.pending, self.native = pending, plan
        return plan

    def candidate_moves(self, p, moved=frozenset()):
        out = []
        for vm, src in self.pending:
            if vm in moved:
                continue
            out.extend(Move(vm, src, d) for d in self.destinations(p, vm))
        return out

    def native_move(self, p, moved=frozenset()):
        for vm, src in self.pending:
            if vm in moved:
                continue
            dests = self.ranked_destinations(p, vm)
            if dests:
                return Move(vm, src, dests[0])
        return None

    def done(self, p, moved=frozenset()):
        return all(vm in moved for vm, _ in self.pending)

    def potential_vms(self, p, moved=frozenset()):
        return {vm for vm, _ in self.pending if vm not in moved}


def lrmmt_candidates(p: Placement, history: Mapping, cfg: Mapping | None = None) -> list[Move]:
    return LrMmtPolicy(history=history, **(cfg or {})).bind(p)


POLICIES = {
    "sandpiper": SandpiperPolicy,
    "ffd": FfdPolicy,
    "iaware": IAwarePolicy,
    "lrmmt": LrMmtPolicy,
}

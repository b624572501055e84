"""Event-driven execution of migration plans and the interval-level experiment loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .depgraph import DepGraph, Move, is_dependent
from .energy import EnergyModel
from .migcost import MigrationConfig, MigrationEstimate, estimate_total
from .policies import Placement
from .topology import Topology

log = logging.getLogger(__name__)


class ScheduleError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScheduledMigration:
    move: Move
    start: float
    end: float
    estimate: MigrationEstimate | None = None
    path: tuple = ()

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class Schedule:
    entries: list = field(default_factory=list)
    mode: str = "concurrent-groups"


@dataclass
class ScheduleReport:
    total_migration_time: float = 0.0
    sum_exec_time: float = 0.0
    total_downtime: float = 0.0
    total_transferred: float = 0.0
    per_migration: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total_migration_time": self.total_migration_time,
            "sum_exec_time": self.sum_exec_time,
            "total_downtime": self.total_downtime,
            "total_transferred": self.total_transferred,
            "migrations": len(self.per_migration),
        }


def admission_loop(priority: Sequence[int], dependent: Callable[[int, int], bool],
                   begin: Callable[[int, float, list], float | None],
                   sequential: bool = False, release: Callable[[int], None] | None = None) -> dict:
    """Greedy admission. Whenever the running set changes, start every pending
    item (in ``priority`` order) that is independent of everything running.
    ``begin(i, now, running)`` returns the duration, or None to retry later.
    Returns ``{i: (start, end)}``."""
    pending = list(priority)
    running: dict[int, float] = {}
    out = {}
    now = 0.0
    while pending or running:
        for i in list(pending):
            if sequential and running:
                break
            if any(dependent(i, j) for j in running):
                continue
            dur = begin(i, now, list(running))
            if dur is None:
                continue
            if dur < 0:
                raise ScheduleError(f"negative duration for item {i}")
            pending.remove(i)
            running[i] = now + dur
            out[i] = (now, now + dur)
        if not running:
            raise ScheduleError(f"cannot admit any of {len(pending)} pending migrations")
        now = min(running.values())
        for j in sorted(j for j, end in running.items() if end <= now):
            del running[j]
            if release:
                release(j)
    return out


def schedule_fixed(durations: Sequence[float], dependent: Callable[[int, int], bool],
                   sequential: bool = False) -> list[tuple[float, float]]:
    """Admission with known durations; longest first, plan order on ties
    (plan order only, when ``sequential``)."""
    n = len(durations)
    order = list(range(n)) if sequential else sorted(range(n), key=lambda i: (-durations[i], i))
    times = admission_loop(order, dependent, lambda i, now, run: durations[i], sequential)
    return [times[i] for i in range(n)]


def plan_schedule(plan, g: DepGraph | None, t: Topology, mode: str = "concurrent-groups",
                  mig: MigrationConfig = MigrationConfig()) -> Schedule:
    """Admission-time simulation of a plan. Each running migration holds its
    best-residual path; its duration comes from the cost model at that
    bandwidth."""
    migrations = list(plan.migrations if hasattr(plan, "migrations") else plan)
    moves = [m for m, _ in migrations]
    if g is not None:
        for m in moves:
            if m.node not in g:
                raise ScheduleError(f"migration {m} has no node in the dependency graph")
    vms = plan.final_placement.vms if getattr(plan, "final_placement", None) else None
    sequential = mode == "one-by-one"
    est = [e.t_total for _, e in migrations]
    order = list(range(len(moves))) if sequential else sorted(range(len(moves)), key=lambda i: (-est[i], i))
    reservations: dict = {}
    held: dict[int, tuple] = {}
    estimates: dict[int, MigrationEstimate] = {}

    def dependent(i, j):
        return is_dependent(moves[i].node, moves[j].node, t)

    def begin(i, now, running):
        m = moves[i]
        ps = t.paths_between(m.src, m.dst)
        path, res = t.best_path(ps, reservations)
        bw = min(res, t.nic(m.src), t.nic(m.dst))
        if bw <= 1e-9:
            return None
        spec = vms[m.vm] if vms is not None else None
        e = estimate_total(spec, bw, mig) if spec is not None else migrations[i][1]
        for link in path:
            reservations[link] = reservations.get(link, 0.0) + bw
        held[i] = (path, bw)
        estimates[i] = e
        return e.t_total

    def release(j):
        path, bw = held[j]
        for link in path:
            reservations[link] -= bw
            if reservations[link] <= 1e-9:
                del reservations[link]

    times = admission_loop(order, dependent, begin, sequential, release)
    entries = [ScheduledMigration(moves[i], *times[i], estimates[i], held[i][0]) for i in range(len(moves))]
    return Schedule(entries, "one-by-one" if sequential else "concurrent-groups")


def check_schedule(s: Schedule, t: Topology):
    """Raise if dependent migrations overlap, or any overlap at all in one-by-one mode."""
    es = sorted(s.entries, key=lambda e: (e.start, e.end))
    for a in range(len(es)):
        for b in range(a + 1, len(es)):
            x, y = es[a], es[b]
            if y.start >= x.end - 1e-9:
                continue
            if s.mode == "one-by-one" or is_dependent(x.move.node, y.move.node, t):
                raise ScheduleError(f"{x.move} and {y.move} overlap")


def run_schedule(s: Schedule, t: Topology) -> ScheduleReport:
    check_schedule(s, t)
    if not s.entries:
        return ScheduleReport()
    start = min(e.start for e in s.entries)
    end = max(e.end for e in s.entries)
    return ScheduleReport(
        total_migration_time=end - start,
        sum_exec_time=sum(e.duration for e in s.entries),
        total_downtime=sum(e.estimate.downtime for e in s.entries if e.estimate),
        total_transferred=sum(e.estimate.transferred for e in s.entries if e.estimate),
        per_migration=[e.estimate for e in s.entries],
    )


def switch_energy(s: Schedule, t: Topology, model: EnergyModel) -> float:
    """Joules drawn by switches carrying migration flows: base power while any
    flow crosses the switch plus per-port power for each port in use."""
    spans: dict[str, list] = {}
    for e in s.entries:
        for a, b in e.path:
            for sw, port in ((a, b), (b, a)):
                if sw in t.switches:
                    spans.setdefault(sw, []).append((e.start, e.end, port))
    total = 0.0
    for sw, items in spans.items():
        cuts = sorted({x for s0, s1, _ in items for x in (s0, s1)})
        for lo, hi in zip(cuts, cuts[1:]):
            ports = {p for s0, s1, p in items if s0 <= lo and s1 >= hi}
            if ports:
                total += (model.switch_base_watts + model.switch_port_watts * len(ports)) * (hi - lo)
    return total

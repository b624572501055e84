"""Scenario driver: plan, schedule and account one run, and serialize its report."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

from .migc import MigcConfig
from .policies import POLICIES, IAwarePolicy, LrMmtPolicy, Placement, Policy, PolicyObjective
from .selector import SELECTORS, CamigConfig, MigrationPlan, select
from .sim import ScheduleReport, plan_schedule, run_schedule, switch_energy
from .topology import Topology
from .traces import Scenario, ScenarioError

log = logging.getLogger(__name__)

CSV_COLUMNS = ["time", "migrations", "total_migration_time", "downtime",
               "energy_host", "energy_switch", "timeouts"]
SCHEMA = "#schema=v1"


def fmt(x):
    """Fix floats to 9 significant digits, recursively."""
    if isinstance(x, float):
        return float(f"{x:.9g}")
    if isinstance(x, dict):
        return {k: fmt(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [fmt(v) for v in x]
    return x


def schedule_mode(selector: str) -> str:
    return "one-by-one" if selector in ("native", "one-by-one") else "concurrent-groups"


def make_objective(sc: Scenario) -> PolicyObjective:
    doc = dict(sc.objective)
    if "band" in doc and doc["band"] is not None:
        doc["band"] = tuple(doc["band"])
    return PolicyObjective(energy=sc.energy_model(), **doc)


def make_policy(sc: Scenario, t: Topology, name: str | None = None, history=None) -> Policy:
    params = dict(sc.policy)
    name = name or params.pop("name", None)
    params.pop("name", None)
    if name not in POLICIES:
        raise ScenarioError(f"unknown policy {name!r}; expected one of {', '.join(sorted(POLICIES))}")
    obj = make_objective(sc)
    mig = sc.migration_config()
    if name == "lrmmt":
        return LrMmtPolicy(objective=obj, history=history or {}, topology=t, mig=mig, **params)
    if name == "iaware":
        if "weights" in params:
            params["weights"] = tuple(params["weights"])
        return IAwarePolicy(objective=obj, topology=t, mig=mig, **params)
    return POLICIES[name](objective=obj, **params)


def camig_config(sc: Scenario) -> CamigConfig:
    doc = dict(sc.camig)
    migc = MigcConfig(doc.pop("kappa", 1.0), doc.pop("kappa_mig", 1.0))
    if doc.get("delta") == "inf":
        doc["delta"] = float("inf")
    return CamigConfig(migc=migc, mig=sc.migration_config(), seed=sc.seed, **doc)


def check_selector(selector: str):
    if selector not in SELECTORS:
        raise ScenarioError(f"unknown selector {selector!r}; expected one of {', '.join(SELECTORS)}")


@dataclass
class ExperimentReport:
    scenario: str
    policy: str
    selector: str
    seed: int
    summary: dict = field(default_factory=dict)
    intervals: list = field(default_factory=list)
    plan: dict | None = None

    def to_dict(self) -> dict:
        doc = {"scenario": self.scenario, "policy": self.policy, "selector": self.selector,
               "seed": self.seed, "summary": self.summary, "intervals": self.intervals}
        if self.plan is not None:
            doc["plan"] = self.plan
        return fmt(doc)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join([SCHEMA, *CSV_COLUMNS]) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        for row in self.intervals:
            w.writerow([""] + [fmt(row[c]) for c in CSV_COLUMNS])
        return buf.getvalue()


def _execute(plan: MigrationPlan, t: Topology, selector: str, sc: Scenario):
    sched = plan_schedule(plan, None, t, schedule_mode(selector), sc.migration_config())
    return sched, run_schedule(sched, t)


def run_experiment(sc: Scenario, policy: str | None = None, selector: str | None = None,
                   t: Topology | None = None) -> ExperimentReport:
    selector = selector or sc.selector
    check_selector(selector)
    t = t or sc.build_topology()
    if sc.kind == "energy":
        return _run_energy(sc, policy, selector, t)
    p = Placement(sc.host_specs(), sc.vm_specs(), sc.placement)
    pol = make_policy(sc, t, policy)
    plan = select(selector, p, pol, t, camig_config(sc))
    sched, rep = _execute(plan, t, selector, sc)
    final = plan.final_placement
    summary = {
        **rep.to_dict(),
        "initial_score": plan.initial_score,
        "final_score": plan.achieved_score,
        "objective_met": pol.objective.satisfied(final),
        "feasible": final.feasible(),
        "stop_reason": plan.stop_reason,
        "energy_switch": switch_energy(sched, t, sc.energy_model()) / 3600.0,
    }
    row = {"time": 0.0, "migrations": len(plan), "total_migration_time": rep.total_migration_time,
           "downtime": rep.total_downtime, "energy_host": 0.0,
           "energy_switch": summary["energy_switch"], "timeouts": 0}
    return ExperimentReport(sc.name, pol.name, selector, sc.seed, summary, [row], plan.to_dict())


def _run_energy(sc: Scenario, policy: str | None, selector: str, t: Topology) -> ExperimentReport:
    hosts, vms = sc.host_specs(), sc.vm_specs()
    model = sc.energy_model()
    p = Placement(hosts, vms, sc.placement)
    history = {h: [] for h in hosts}
    for k in range(sc.warmup):
        p = p.with_cpu({vm: sc.traces[vm][k] * vms[vm].cpu_demand for vm in vms})
        for h in hosts:
            history[h].append(p.cpu_util(h))
    rows = []
    oversub = {h: 0 for h in hosts}
    tot = {"migrations": 0, "total_migration_time": 0.0, "sum_exec_time": 0.0, "downtime": 0.0,
           "transferred": 0.0, "energy_host": 0.0, "energy_switch": 0.0, "workloads": 0,
           "timeouts": 0, "serve_incl": 0.0, "serve_excl": 0.0}
    pol_name = policy or sc.policy.get("name")
    for k in range(sc.intervals):
        idx = sc.warmup + k
        p = p.with_cpu({vm: sc.traces[vm][idx] * vms[vm].cpu_demand for vm in vms})
        for h in hosts:
            history[h].append(p.cpu_util(h))
        pol = make_policy(sc, t, pol_name, history)
        if isinstance(pol, LrMmtPolicy):
            pol.bind(p)
        plan = select(selector, p, pol, t, camig_config(sc))
        sched, rep = _execute(plan, t, selector, sc)
        final = plan.final_placement
        if rep.total_migration_time > sc.interval:
            log.warning("interval %d: migrations take %.1f s, longer than the interval", k,
                        rep.total_migration_time)
        # a host emptied by this plan stays on until its last outgoing migration ends
        last_out = {}
        for e in sched.entries:
            last_out[e.move.src] = max(last_out.get(e.move.src, 0.0), e.end)
        e_host = 0.0
        for h in hosts:
            if final.active(h):
                e_host += model.host_power(final.cpu_util(h)) * sc.interval
            elif p.active(h):
                e_host += model.host_power(p.cpu_util(h)) * min(last_out.get(h, 0.0), sc.interval)
        e_switch = switch_energy(sched, t, model)
        timeouts, serve = 0, []
        for h in hosts:
            if not final.active(h):
                continue
            demand = final.cpu_used(h)
            cap = hosts[h].cpu_total_mips
            oversub[h] = oversub[h] + 1 if demand > cap + 1e-9 else 0
            stretch = max(1.0, demand / cap)
            n = final.vm_count(h)
            if oversub[h] >= sc.patience:
                timeouts += n
            serve += [(sc.interval * stretch, oversub[h] >= sc.patience)] * n
        for h in hosts:
            if not final.active(h):
                oversub[h] = 0
        p = final
        tot["migrations"] += len(plan)
        tot["total_migration_time"] += rep.total_migration_time
        tot["sum_exec_time"] += rep.sum_exec_time
        tot["downtime"] += rep.total_downtime
        tot["transferred"] += rep.total_transferred
        tot["energy_host"] += e_host / 3600.0
        tot["energy_switch"] += e_switch / 3600.0
        tot["workloads"] += len(serve)
        tot["timeouts"] += timeouts
        tot["serve_incl"] += sum(s for s, _ in serve)
        tot["serve_excl"] += sum(s for s, late in serve if not late)
        rows.append({"time": k * sc.interval, "migrations": len(plan),
                     "total_migration_time": rep.total_migration_time, "downtime": rep.total_downtime,
                     "energy_host": e_host / 3600.0, "energy_switch": e_switch / 3600.0,
                     "timeouts": timeouts, "active_hosts": sum(1 for h in hosts if final.active(h))})
    served = tot["workloads"] - tot["timeouts"]
    summary = {
        "migrations": tot["migrations"],
        "total_migration_time": tot["total_migration_time"],
        "sum_exec_time": tot["sum_exec_time"],
        "total_downtime": tot["downtime"],
        "total_transferred": tot["transferred"],
        "energy_host": tot["energy_host"],
        "energy_switch": tot["energy_switch"],
        "energy_total": tot["energy_host"] + tot["energy_switch"],
        "workloads": tot["workloads"],
        "timeouts": tot["timeouts"],
        "serve_time_incl": tot["serve_incl"] / tot["workloads"] if tot["workloads"] else 0.0,
        "serve_time_excl": tot["serve_excl"] / served if served else 0.0,
    }
    return ExperimentReport(sc.name, pol_name, selector, sc.seed, summary, rows)

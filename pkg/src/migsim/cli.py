"""migsim command line.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from .experiment import (SCHEMA, camig_config, check_selector, fmt, make_policy,
                         run_experiment)
from .oracle import OracleError, load_instance, solve_exhaustive
from .policies import Placement
from .selector import SELECTORS, select
from .topology import GBPS, TopologyError, build_fat_tree
from .traces import Scenario, ScenarioError, synth_energy_scenario, synth_lb_scenario

log = logging.getLogger("migsim")

COMPARE_COLUMNS = ["selector", "seed", "migrations", "total_migration_time", "sum_exec_time",
                   "downtime", "final_score", "energy_total"]


class UsageError(Exception):
    pass


def resolve_scenario(ref: str, seed: int | None = None) -> Scenario:
    """A JSON path, or ``builtin:lb_multi{1..4}`` / ``builtin:energy[_N]``."""
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        s = 0 if seed is None else seed
        if name.startswith("lb_multi") and name[8:].isdigit():
            return synth_lb_scenario(s, int(name[8:]))
        if name == "energy" or name.startswith("energy_"):
            hosts = int(name.split("_", 1)[1]) if "_" in name else 32
            return synth_energy_scenario(s, hosts)
        raise UsageError(f"unknown builtin scenario {name!r}; expected lb_multi1..4 or energy[_N]")
    if not Path(ref).exists():
        raise UsageError(f"scenario file not found: {ref}")
    sc = Scenario.load(ref)
    if seed is not None:
        sc.seed = seed
    return sc


def _write(out: str | None, name: str, text: str):
    if out is None:
        sys.stdout.write(text)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / name).write_text(text)
    log.info("wrote %s", d / name)


def cmd_topo(args):
    if args.fat_tree is not None:
        t, managed = build_fat_tree(args.fat_tree, args.link_bw), None
    elif args.scenario:
        sc = resolve_scenario(args.scenario, args.seed)
        t, managed = sc.build_topology(), sorted(sc.hosts)
    else:
        raise UsageError("topo needs --scenario or --fat-tree K")
    doc = {"hosts": len(t.hosts), "switches": len(t.switches), "links": len(t.links)}
    if managed is not None:
        doc["managed_hosts"] = managed
    if args.verbose_topology:
        doc["topology"] = t.to_dict()
    _write(args.out, "topology.json", json.dumps(fmt(doc), indent=2) + "\n")


def cmd_plan(args):
    sc = resolve_scenario(args.scenario, args.seed)
    selector = args.selector or sc.selector
    check_selector(selector)
    if sc.kind != "load-balance":
        raise UsageError("plan works on load-balance scenarios; use run for trace-driven ones")
    t = sc.build_topology()
    p = Placement(sc.host_specs(), sc.vm_specs(), sc.placement)
    pol = make_policy(sc, t, args.policy)
    plan = select(selector, p, pol, t, camig_config(sc))
    _write(args.out, "plan.json", json.dumps(fmt(plan.to_dict()), indent=2, sort_keys=True) + "\n")


def cmd_run(args):
    sc = resolve_scenario(args.scenario, args.seed)
    report = run_experiment(sc, args.policy, args.selector)
    formats = args.format.split(",")
    for f in formats:
        if f not in ("json", "csv"):
            raise UsageError(f"unknown format {f!r}; expected json and/or csv")
    if "json" in formats:
        _write(args.out, "report.json", report.to_json())
    if "csv" in formats:
        _write(args.out, "report.csv", report.to_csv())


def cmd_compare(args):
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    selectors = [s for part in (args.selector or ["native,native+sch,hosthits,camig"])
                 for s in part.split(",") if s]
    for s in selectors:
        check_selector(s)
    rows = []
    for sel in selectors:
        for seed in range(args.seeds):
            sc = resolve_scenario(args.scenario, seed)
            r = run_experiment(sc, args.policy, sel).summary
            rows.append([sel, seed, r["migrations"], r["total_migration_time"], r["sum_exec_time"],
                         r["total_downtime"], r.get("final_score", ""), r.get("energy_total", "")])
    buf = io.StringIO()
    buf.write(",".join([SCHEMA, *COMPARE_COLUMNS]) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([""] + fmt(r))
    for sel in selectors:
        mine = [r for r in rows if r[0] == sel]
        agg = [sel, "mean"]
        for c in range(2, len(COMPARE_COLUMNS)):
            vals = [r[c] for r in mine if r[c] != ""]
            agg.append(sum(vals) / len(vals) if vals else "")
        w.writerow([""] + fmt(agg))
    _write(args.out, "comparison.csv", buf.getvalue())


def cmd_oracle(args):
    if not args.instance:
        raise UsageError("oracle needs --instance")
    inst = load_instance(args.instance)
    assignment, value = solve_exhaustive(inst)
    doc = {"assignment": assignment, "value": value,
           "moved": sorted(vm for vm in inst.vms if assignment[vm] != inst.initial[vm])}
    _write(args.out, "oracle.json", json.dumps(fmt(doc), indent=2, sort_keys=True) + "\n")


def cmd_validate(args):
    sc = resolve_scenario(args.scenario, args.seed)
    sc.build_topology()
    p = Placement(sc.host_specs(), sc.vm_specs(), sc.placement)
    make_policy(sc, sc.build_topology())
    check_selector(sc.selector)
    camig_config(sc)
    if not p.feasible():
        log.warning("initial placement exceeds some host capacity")
    if args.out:
        _write(args.out, f"{sc.name}.json", sc.to_json() + "\n")
    else:
        print(f"ok {sc.name}: {len(sc.hosts)} hosts, {len(sc.vms)} VMs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="migsim", description="Concurrency-aware VM migration planner and simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario JSON or builtin:<name>")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", default=None, help="output directory (default: stdout)")

    p = sub.add_parser("topo", help="summarize a scenario's topology or build a fat tree")
    common(p, scenario=False)
    p.add_argument("--scenario", help="scenario JSON or builtin:<name>")
    p.add_argument("--fat-tree", type=int, metavar="K", help="build a k-ary fat tree instead")
    p.add_argument("--link-bw", type=float, default=GBPS, metavar="BPS")
    p.add_argument("--verbose-topology", action="store_true", help="include the full link list")
    p.set_defaults(fn=cmd_topo)

    p = sub.add_parser("plan", help="select migrations and emit the plan with its round trace")
    common(p)
    p.add_argument("--selector", choices=SELECTORS)
    p.add_argument("--policy")
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("run", help="plan, schedule and simulate one scenario")
    common(p)
    p.add_argument("--selector", choices=SELECTORS)
    p.add_argument("--policy")
    p.add_argument("--format", default="json,csv")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("compare", help="run several selectors over seeds")
    common(p)
    p.add_argument("--selector", action="append", help="comma-separated selectors (repeatable)")
    p.add_argument("--policy")
    p.add_argument("--seeds", type=int, default=10)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("oracle", help="solve a small instance exactly")
    common(p, scenario=False)
    p.add_argument("--instance", help="instance JSON")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("validate", help="check a scenario (with --out, write it as JSON)")
    common(p)
    p.set_defaults(fn=cmd_validate)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("MIGSIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (UsageError, ScenarioError, OracleError, TopologyError) as e:
        print(f"migsim: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"migsim: runtime failure: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from migsim.depgraph import Move
from migsim.migcost import MigrationConfig, VmSpec, estimate_total
from migsim.oracle import InstancePolicy, instance_from_placement
from migsim.policies import Placement, PolicyObjective, SandpiperPolicy
from migsim.selector import (CamigConfig, estimate_move, get_mig_candidates,
                             refresh_single_interference, run_camig, run_hosthits, run_native,
                             select)
from migsim.topology import GB, GBPS, HostSpec, build_fat_tree, build_star
from migsim.traces import synth_lb_scenario

import choice_example


def small(utils, cap=1000.0, vm_cpu=None):
    """one host per entry; host i carries VMs summing to utils[i]"""
    hosts = {f"h{i}": HostSpec(cpu_total_mips=cap, memory=256 * GB) for i in range(len(utils))}
    vms, place = {}, {}
    for i, u in enumerate(utils):
        parts = vm_cpu or [u * cap]
        for j, c in enumerate(parts if vm_cpu is None else [c for c in parts if c <= u * cap]):
            vms[f"v{i}_{j}"] = VmSpec(memory=(2 + j) * GB, dirty_rate_factor=0.001, cpu_demand=c)
            place[f"v{i}_{j}"] = f"h{i}"
    return Placement(hosts, vms, place)


def lb_case(seed=0):
    sc = synth_lb_scenario(seed, 1)
    t = sc.build_topology()
    p = Placement(sc.host_specs(), sc.vm_specs(), sc.placement)
    pol = SandpiperPolicy(PolicyObjective(band=(0.45, 0.55)), vm_depth=1)
    return p, pol, t


def test_example_picks_the_independent_combination():
    plan = run_camig(choice_example.placement(), choice_example.ChoicePolicy(), choice_example.topology())
    assert sorted(m.vm for m in plan.moves) == ["a", "d"]
    assert plan.stop_reason == "objective"


def test_already_balanced_gives_empty_plan():
    p = small([0.5, 0.5, 0.5])
    plan = run_camig(p, SandpiperPolicy(), build_star(sorted(p.hosts)))
    assert len(plan) == 0
    assert plan.stop_reason == "objective"
    assert plan.achieved_score == plan.initial_score == 0.0


def test_no_candidates_gives_empty_plan():
    p = small([0.9, 0.9])
    plan = run_camig(p, SandpiperPolicy(), build_star(sorted(p.hosts)))
    assert len(plan) == 0 and plan.stop_reason == "no-candidates"


class OnlyNative(SandpiperPolicy):
    def candidate_moves(self, p, moved=frozenset()):
        m = self.native_move(p, moved)
        return [] if m is None else [m]


def test_single_candidate_degenerates_to_native():
    p, _, t = lb_case(3)
    pol = OnlyNative(PolicyObjective(band=(0.45, 0.55)))
    camig = run_camig(p, pol, t)
    native = run_native(p, pol, t)
    assert camig.moves == native.moves[:len(camig.moves)]
    assert len(camig) > 0


def test_candidates_with_equal_scores():
    p = small([0.7, 0.3, 0.3], vm_cpu=[100.0, 600.0])
    pol = SandpiperPolicy(PolicyObjective(band=(0.45, 0.55)), upper=0.55)
    best, cands = get_mig_candidates(p, pol, 0.0)
    dsts = sorted(m.dst for m, _ in cands if m.vm == "v0_0")
    assert dsts == ["h1", "h2"]
    assert all(s == best for _, s in cands)
    _, everything = get_mig_candidates(p, pol, math.inf)
    assert len(everything) == len(pol.candidate_moves(p))
    _, none = get_mig_candidates(small([0.5, 0.5]), pol, 0.0)
    assert none == []


def test_tolerance_widens_candidates():
    p, pol, _ = lb_case(1)
    _, tight = get_mig_candidates(p, pol, 0.0)
    _, loose = get_mig_candidates(p, pol, 0.01)
    assert len(loose) >= len(tight) >= 1


def test_refresh_without_reservations_matches_closed_form():
    p, pol, t = lb_case(2)
    moves = pol.candidate_moves(p)[:6]
    norm, raw = refresh_single_interference(moves, p, t, MigrationConfig())
    for m in moves:
        assert raw[m].t_total == estimate_total(p.vms[m.vm], GBPS, MigrationConfig()).t_total
    assert min(norm.values()) == 0.0


def test_refresh_reserved_link_is_slower():
    t = build_star(["A", "B", "C"])
    vm = VmSpec(memory=4 * GB, dirty_rate_factor=0.001, cpu_demand=10)
    hosts = {h: HostSpec() for h in "ABC"}
    p = Placement(hosts, {"v": vm, "w": vm}, {"v": "A", "w": "A"})
    mv, mw = Move("v", "A", "B"), Move("w", "A", "C")
    free = estimate_move(p, mv, t, MigrationConfig())
    slowed = estimate_move(p, mv, t, MigrationConfig(), {("A", "s0"): 0.5 * GBPS})
    assert slowed.t_total > free.t_total
    norm, _ = refresh_single_interference([mv, mw], p, t, MigrationConfig())
    assert norm == {mv: 0.0, mw: 0.0}
    norm, raw = refresh_single_interference([mv], p, t, MigrationConfig(), {("A", "s0"): GBPS})
    assert norm == {} and raw == {}


def test_trace_records_rounds():
    p, pol, t = lb_case(0)
    plan = run_camig(p, pol, t)
    assert len(plan.rounds) == len(plan)
    for r, (m, _) in zip(plan.rounds, plan.migrations):
        assert r["chosen"]["vm"] == m.vm
        scored = [c for c in r["candidates"] if c["interference"] is not None]
        assert scored
    doc = plan.to_dict()
    assert doc["selector"] == "camig" and len(doc["migrations"]) == len(plan)


def test_camig_reaches_band_on_multi1():
    for seed in range(3):
        p, pol, t = lb_case(seed)
        plan = run_camig(p, pol, t)
        assert plan.final_placement.feasible()
        assert plan.achieved_score < plan.initial_score
        assert plan.achieved_score <= 0.05


def test_selectors_dispatch():
    p, pol, t = lb_case(0)
    for name in ("native", "native+sch", "one-by-one", "hosthits", "camig", "nomig"):
        plan = select(name, p, pol, t)
        assert plan.selector == name
        assert plan.final_placement.feasible()
    assert len(select("nomig", p, pol, t)) == 0
    with pytest.raises(ValueError):
        select("bogus", p, pol, t)


def test_hosthits_spreads_destinations():
    p, pol, t = lb_case(4)
    plan = run_hosthits(p, pol, t)
    assert len(plan) > 0
    assert plan.final_placement.feasible()
    assert plan.achieved_score < plan.initial_score
    # the first pick goes to the lexicographically first equivalent host
    _, cands = get_mig_candidates(p, pol, 0.0, [m for m in pol.candidate_moves(p)
                                                   if m.vm == plan.moves[0].vm])
    assert plan.moves[0].dst == min(m.dst for m, _ in cands)


def test_reservation_toggle():
    p, pol, t = lb_case(5)
    a = run_camig(p, pol, t, CamigConfig(reserve_bandwidth=True))
    b = run_camig(p, pol, t, CamigConfig(reserve_bandwidth=False))
    assert a.final_placement.feasible() and b.final_placement.feasible()
    # a selected migration holds its NICs for the rest of planning
    assert len({m.src for m in a.moves}) == len(a)
    assert len({m.dst for m in a.moves}) == len(a)
    assert len(a) < len(b)
    assert a.stop_reason == "no-bandwidth"


def test_config_validation():
    with pytest.raises(ValueError):
        CamigConfig(delta=-1)
    with pytest.raises(ValueError):
        CamigConfig(mis_limit=0)


@st.composite
def instances(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    nh = int(rng.integers(3, 6))
    hosts = [f"H{i}" for i in range(nh)]
    vms, place = {}, {}
    load = {h: 0.0 for h in hosts}
    for i in range(int(rng.integers(2, 8))):
        h = hosts[int(rng.integers(nh))]
        w = float(rng.choice([100.0, 200.0]))
        if load[h] + w > 1000:
            continue
        load[h] += w
        vms[f"v{i}"] = VmSpec(memory=float(rng.integers(1, 9)) * GB, dirty_rate_factor=0.001, cpu_demand=w)
        place[f"v{i}"] = h
    if not vms:
        vms["v0"] = VmSpec(memory=GB, cpu_demand=100.0)
        place["v0"] = hosts[0]
    p = Placement({h: HostSpec(cpu_total_mips=1000.0, memory=1000 * GB) for h in hosts}, vms, place)
    t = build_star(hosts)
    allowed = {v: [h for h in hosts if h != place[v] and rng.random() < 0.7] for v in vms}
    return p, t, instance_from_placement(p, t, allowed, eps=0.2)


@settings(max_examples=40)
@given(instances())
def test_plan_invariants(case):
    p, t, inst = case
    pol = InstancePolicy(inst)
    plan = run_camig(p, pol, t)
    again = run_camig(p, pol, t)
    assert plan.to_dict() == again.to_dict()
    # every prefix stays within capacity and each VM moves once
    cur = p
    for m in plan.moves:
        cur = cur.apply(m)
        assert cur.feasible()
    assert len({m.vm for m in plan.moves}) == len(plan)
    assert len(plan) <= len(p.vms)
    # strictly improving rounds
    score = plan.initial_score
    for m in plan.moves:
        p = p.apply(m)
        new = pol.objective.score(p)
        assert new < score
        score = new
    # never a larger MIGC at equal normalized cost
    for r in plan.rounds:
        chosen = next(c for c in r["candidates"] if c["vm"] == r["chosen"]["vm"] and c["dst"] == r["chosen"]["dst"])
        for c in r["candidates"]:
            if c["migc"] is not None and c["norm_exec"] == chosen["norm_exec"]:
                assert chosen["migc"] <= c["migc"] + 1e-12

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from migsim.depgraph import (DepGraph, GraphError, Move, SrcDstNode, all_maximal_cliques,
                             build_dep_graph, degeneracy_order, graph_from_edges, is_dependent,
                             node_cliques, node_maximal_independent_sets, reduce_cliques,
                             update_dep_graph)
from migsim.topology import GBPS, HostSpec, Topology, TopologyError, build_fat_tree, build_star

from oracles import brute_cliques, brute_degeneracy, brute_independent_sets, random_graph

N = SrcDstNode
STAR = build_star(["H1", "H2", "H3", "H4"], 10 * GBPS)


def complement(adj):
    return {n: frozenset(set(adj) - adj[n] - {n}) for n in adj}


def graphs():
    return st.builds(lambda seed, n, p: random_graph(np.random.default_rng(seed), n, p),
                     st.integers(0, 2 ** 32 - 1), st.integers(1, 11), st.sampled_from([0.2, 0.5, 0.8]))


# dependency test

def test_shared_source_dependent():
    assert is_dependent(N("H1", "H3"), N("H1", "H4"), STAR)


def test_disjoint_endpoints_independent():
    assert not is_dependent(N("H1", "H3"), N("H4", "H1"), STAR)


def test_identical_pair_dependent():
    assert is_dependent(N("H1", "H3"), N("H1", "H3"), STAR)


def test_shared_destination_dependent():
    assert is_dependent(N("H1", "H3"), N("H2", "H3"), STAR)


def test_reverse_pair_is_independent_under_full_duplex():
    # each access link carries one flow per direction
    assert not is_dependent(N("H1", "H4"), N("H4", "H1"), STAR)


def _dumbbell(core_bw):
    hosts = {h: HostSpec() for h in ("A", "B", "C", "D")}
    links = [("A", "s1", GBPS), ("B", "s1", GBPS), ("C", "s2", GBPS), ("D", "s2", GBPS),
             ("s1", "s2", core_bw)]
    return Topology(hosts, ["s1", "s2"], links)


def test_shared_bottleneck_makes_pairs_dependent():
    assert is_dependent(N("A", "C"), N("B", "D"), _dumbbell(GBPS))
    assert is_dependent(N("A", "C"), N("B", "D"), _dumbbell(1.5 * GBPS))
    assert not is_dependent(N("A", "C"), N("B", "D"), _dumbbell(2 * GBPS))
    # opposite directions over the core never compete
    assert not is_dependent(N("A", "C"), N("D", "B"), _dumbbell(GBPS))


def test_multipath_leaves_room_for_both():
    t = build_fat_tree(4)
    # disjoint pods, four core paths each: two flows fit on different cores
    assert not is_dependent(N("h0", "h8"), N("h1", "h12"), t)
    # same source edge switch but different hosts: uplinks still suffice
    assert not is_dependent(N("h0", "h4"), N("h1", "h5"), t)


def test_unknown_host():
    with pytest.raises(TopologyError):
        is_dependent(N("H1", "X"), N("H2", "H3"), STAR)


def test_pair_node_needs_distinct_endpoints():
    with pytest.raises(GraphError):
        N("H1", "H1")


@given(st.data())
def test_dependency_symmetric(data):
    t = build_fat_tree(4)
    hosts = sorted(t.hosts)
    a, b, c, d = (data.draw(st.sampled_from(hosts)) for _ in range(4))
    if a == b or c == d:
        return
    assert is_dependent(N(a, b), N(c, d), t) == is_dependent(N(c, d), N(a, b), t)


# graph building

def test_build_example_graph():
    g = build_dep_graph([Move("m1", "H1", "H3"), Move("m2", "H1", "H4"), Move("m3", "H4", "H1")], STAR)
    assert g.nodes == (N("H1", "H3"), N("H1", "H4"), N("H4", "H1"))
    assert g.edges == [(N("H1", "H3"), N("H1", "H4"))]


def test_same_pair_groups_into_one_node():
    g = build_dep_graph([Move("m1", "H1", "H3"), Move("m2", "H1", "H3")], STAR)
    assert len(g) == 1
    assert len(g.migrations[N("H1", "H3")]) == 2


def test_empty_graph():
    g = build_dep_graph([], STAR)
    assert len(g) == 0 and g.edges == []


def test_unknown_host_in_candidates():
    with pytest.raises(TopologyError):
        build_dep_graph([Move("m", "H1", "H9")], STAR)


def test_node_bound_and_json_export():
    t = build_fat_tree(4)
    rng = np.random.default_rng(3)
    hosts = sorted(t.hosts)
    moves = []
    for i in range(30):
        s, d = rng.choice(hosts, 2, replace=False)
        moves.append(Move(f"v{i}", str(s), str(d)))
    g = build_dep_graph(moves, t)
    assert len(g) <= len({m.src for m in moves}) * len({m.dst for m in moves})
    assert sum(len(v) for v in g.migrations.values()) == len(moves)
    doc = json.loads(g.to_json(all_maximal_cliques(g)))
    assert set(doc) == {"nodes", "edges", "migrations", "cliques"}


# cliques and degeneracy

def test_clique_examples():
    tri = graph_from_edges("abc", [("a", "b"), ("b", "c"), ("a", "c")])
    assert all_maximal_cliques(tri) == [frozenset("abc")]
    empty = graph_from_edges("abc", [])
    assert sorted(map(sorted, all_maximal_cliques(empty))) == [["a"], ["b"], ["c"]]
    assert node_cliques(all_maximal_cliques(tri), "a") == [frozenset("abc")]
    assert node_cliques(all_maximal_cliques(empty), "a") == [frozenset("a")]


def test_degeneracy_examples():
    assert degeneracy_order(graph_from_edges("abc", [("a", "b"), ("b", "c")]))[1] == 1
    k4 = graph_from_edges("abcd", itertools.combinations("abcd", 2))
    assert degeneracy_order(k4)[1] == 3


@given(graphs())
def test_cliques_match_brute_force(adj):
    got = all_maximal_cliques(adj)
    assert len(got) == len(set(got))
    assert set(got) == brute_cliques(adj)
    for v in adj:
        assert set(node_cliques(got, v)) == {c for c in brute_cliques(adj) if v in c}


@given(graphs())
def test_clique_output_properties(adj):
    cs = all_maximal_cliques(adj)
    assert set().union(*cs) == set(adj)
    for c in cs:
        assert all(b in adj[a] for a, b in itertools.combinations(c, 2))
        assert not any(all(u in adj[x] for x in c) for u in set(adj) - c)
    assert not any(a < b for a in cs for b in cs)


@given(graphs())
def test_degeneracy_matches_definition(adj):
    order, d = degeneracy_order(adj)
    assert sorted(order) == sorted(adj)
    assert d == brute_degeneracy(adj)


# independent sets

def test_mis_examples():
    empty = graph_from_edges("abc", [])
    assert node_maximal_independent_sets(empty, "a") == [frozenset("abc")]
    one = graph_from_edges("abc", [("a", "b")])
    assert set(node_maximal_independent_sets(one, "c")) == {frozenset("ac"), frozenset("bc")}
    k4 = graph_from_edges("abcd", itertools.combinations("abcd", 2))
    for v in "abcd":
        assert node_maximal_independent_sets(k4, v) == [frozenset(v)]
    with pytest.raises(GraphError):
        node_maximal_independent_sets(one, "z")


@given(graphs())
def test_mis_match_brute_force_and_complement(adj):
    ref = brute_independent_sets(adj)
    comp_cliques = brute_cliques(complement(adj))
    for v in adj:
        got = node_maximal_independent_sets(adj, v)
        assert len(got) == len(set(got))
        assert set(got) == {s for s in ref if v in s}
        assert set(got) == {c for c in comp_cliques if v in c}
        for s in got:
            assert v in s
            assert all(b not in adj[a] for a, b in itertools.combinations(s, 2))
            assert all(adj[u] & s for u in set(adj) - s)


def test_mis_limit_truncates():
    adj = graph_from_edges(range(8), [(0, 1), (2, 3), (4, 5), (6, 7)])
    assert len(node_maximal_independent_sets(adj, 0)) == 8
    assert len(node_maximal_independent_sets(adj, 0, limit=3)) == 3


# incremental maintenance

def test_selecting_a_vm_drops_its_other_candidates():
    g = build_dep_graph([Move("v1", "H1", "H3"), Move("v1", "H3", "H1"), Move("v2", "H4", "H2")], STAR)
    cs = all_maximal_cliques(g)
    g2, cs2 = update_dep_graph(g, cs, Move("v1", "H1", "H3"))
    assert N("H3", "H1") not in g2 and N("H1", "H3") not in g2
    assert g2.nodes == (N("H4", "H2"),)
    assert cs2 == all_maximal_cliques(g2)


def test_isolated_clique_removed():
    g = build_dep_graph([Move("v1", "H1", "H3"), Move("v2", "H2", "H4")], STAR)
    cs = all_maximal_cliques(g)
    assert frozenset({N("H1", "H3")}) in cs
    g2, cs2 = update_dep_graph(g, cs, Move("v1", "H1", "H3"))
    assert cs2 == [frozenset({N("H2", "H4")})]


def test_node_keeps_other_migrations():
    g = build_dep_graph([Move("v1", "H1", "H3"), Move("v2", "H1", "H3")], STAR)
    g2, cs2 = update_dep_graph(g, all_maximal_cliques(g), Move("v1", "H1", "H3"))
    assert g2.migrations[N("H1", "H3")] == (Move("v2", "H1", "H3"),)
    assert cs2 == [frozenset({N("H1", "H3")})]


def test_update_unknown_selection():
    g = build_dep_graph([Move("v1", "H1", "H3")], STAR)
    with pytest.raises(GraphError):
        update_dep_graph(g, [], Move("v9", "H1", "H3"))


@given(graphs(), st.integers(0, 2 ** 32 - 1))
def test_clique_reduction_equals_reenumeration(adj, seed):
    rng = np.random.default_rng(seed)
    cs = all_maximal_cliques(adj)
    live = dict(adj)
    for _ in range(int(rng.integers(1, len(adj) + 1))):
        gone = {sorted(live)[int(rng.integers(len(live)))]}
        live = {n: frozenset(live[n] - gone) for n in live if n not in gone}
        cs = reduce_cliques(cs, gone, live)
        assert cs == all_maximal_cliques(live)
        if not live:
            break

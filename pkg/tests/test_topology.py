import itertools

import networkx as nx
import pytest
from hypothesis import given, strategies as st

from migsim.topology import (GBPS, HostSpec, Topology, TopologyError, available_bandwidth,
                             build_fat_tree, build_star, paths_between)


@pytest.fixture(scope="module")
def k4():
    return build_fat_tree(4, GBPS)


@pytest.mark.parametrize("k", [4, 6, 8, 10, 12, 14, 16])
def test_fat_tree_closed_forms(k):
    t = build_fat_tree(k, GBPS)
    assert len(t.hosts) == k ** 3 // 4
    assert len(t.switches) == 5 * k * k // 4
    assert sum(s.startswith("core") for s in t.switches) == k * k // 4
    assert sum(s.startswith("agg") for s in t.switches) == k * k // 2
    assert sum(s.startswith("edge") for s in t.switches) == k * k // 2
    # host links + edge-agg + agg-core, each k^3/4
    assert len(t.links) == 3 * k ** 3 // 4
    for h in t.hosts:
        assert len(t.neighbors(h)) == 1
    assert all(cap == GBPS for _, _, cap in t.links)


def test_k8_matches_128_hosts():
    t = build_fat_tree(8, GBPS)
    assert (len(t.hosts), len(t.switches)) == (128, 80)


@pytest.mark.parametrize("k", [3, 2, 5, 0, -4])
def test_bad_arity_rejected(k):
    with pytest.raises(TopologyError):
        build_fat_tree(k)


def test_same_edge_single_two_link_path(k4):
    ps = paths_between(k4, "h0", "h1")
    assert len(ps.paths) == 1
    assert len(ps.paths[0]) == 2


def test_cross_pod_four_paths(k4):
    ps = paths_between(k4, "h0", "h8")
    assert len(ps.paths) == 4
    assert all(len(p) == 6 for p in ps.paths)
    assert ps.aggregate_bandwidth == pytest.approx(GBPS)


def test_same_pod_other_edge(k4):
    ps = paths_between(k4, "h0", "h2")
    assert len(ps.paths) == 2
    assert all(len(p) == 4 for p in ps.paths)


def test_path_errors(k4):
    with pytest.raises(TopologyError):
        paths_between(k4, "h0", "h0")
    with pytest.raises(TopologyError):
        paths_between(k4, "h0", "nope")


def test_path_counts_match_networkx(k4):
    g = nx.Graph()
    g.add_edges_from((a, b) for a, b, _ in k4.links)
    for a, b in itertools.permutations(sorted(k4.hosts), 2):
        ref = list(nx.all_shortest_paths(g, a, b))
        ps = paths_between(k4, a, b)
        assert len(ps.paths) == len(ref)
        assert {tuple(x for l in p for x in l[:1]) + (b,) for p in ps.paths} == {tuple(r) for r in ref}


def test_paths_are_simple_and_anchor_at_access_links(k4):
    for a, b in [("h0", "h15"), ("h3", "h4"), ("h7", "h6")]:
        ps = paths_between(k4, a, b)
        for p in ps.paths:
            assert len(set(p)) == len(p)
            nodes = [p[0][0]] + [l[1] for l in p]
            assert len(set(nodes)) == len(nodes)
            assert p[0] == (a, k4.host_locations[a])
            assert p[-1] == (k4.host_locations[b], b)
        bottlenecks = sum(min(k4.capacity(l) for l in p) for p in ps.paths)
        assert ps.aggregate_bandwidth <= bottlenecks + 1e-6


def test_available_bandwidth_examples(k4):
    one = paths_between(k4, "h0", "h1")
    assert available_bandwidth(k4, one, {}) == GBPS
    assert available_bandwidth(k4, one, {("h0", "edge0_0"): GBPS}) == 0.0
    four = paths_between(k4, "h0", "h8")
    link = four.paths[0][2]
    assert available_bandwidth(k4, four, {link: 0.5 * GBPS}) == GBPS
    with pytest.raises(TopologyError):
        available_bandwidth(k4, one, {("h0", "edge0_0"): 2 * GBPS})


def test_nic_caps_available_bandwidth():
    slow = HostSpec(nic_bandwidth=0.25 * GBPS)
    t = Topology({"a": slow, "b": HostSpec()}, ["s"], [("a", "s", 10 * GBPS), ("b", "s", 10 * GBPS)])
    assert available_bandwidth(t, paths_between(t, "a", "b")) == 0.25 * GBPS


def test_directions_are_independent_capacity():
    t = build_star(["a", "b"])
    ab = paths_between(t, "a", "b")
    assert available_bandwidth(t, ab, {("s0", "a"): GBPS, ("b", "s0"): GBPS}) == GBPS


def test_disconnected_topology_rejected():
    with pytest.raises(TopologyError):
        Topology({"a": HostSpec(), "b": HostSpec()}, ["s"], [("a", "s", GBPS)])


def test_json_round_trip(k4):
    t2 = Topology.from_dict(k4.to_dict())
    assert t2.links == k4.links
    assert t2.hosts == k4.hosts
    assert t2.switches == k4.switches


@given(st.data())
def test_path_count_symmetry(data):
    t = build_fat_tree(data.draw(st.sampled_from([4, 6])))
    hosts = sorted(t.hosts)
    a, b = data.draw(st.lists(st.sampled_from(hosts), min_size=2, max_size=2, unique=True))
    assert len(paths_between(t, a, b).paths) == len(paths_between(t, b, a).paths)


@given(st.data())
def test_available_bandwidth_monotone_in_reservations(data):
    t = build_fat_tree(4)
    hosts = sorted(t.hosts)
    a, b = data.draw(st.lists(st.sampled_from(hosts), min_size=2, max_size=2, unique=True))
    ps = paths_between(t, a, b)
    links = sorted(ps.links())
    res = {}
    last = available_bandwidth(t, ps, res)
    for _ in range(data.draw(st.integers(1, 8))):
        link = data.draw(st.sampled_from(links))
        room = t.capacity(link) - res.get(link, 0.0)
        res[link] = res.get(link, 0.0) + data.draw(st.floats(0, 1)) * room
        now = available_bandwidth(t, ps, res)
        assert now <= last + 1e-6
        last = now

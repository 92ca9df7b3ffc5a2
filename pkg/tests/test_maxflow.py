"""Min-cut solver tests against an exhaustive cut-enumeration oracle."""

import itertools

import numpy as np
import pytest

from multistitch.maxflow import FlowGraph


def brute_force_min_cut(n, scap, tcap, edges):
    """Minimum cut by enumerating all 2^n source-side subsets."""
    best = np.inf
    for bits in itertools.product((0, 1), repeat=n):  # 1 = sink side
        cut = sum(scap[i] if bits[i] else tcap[i] for i in range(n))
        for u, v, cap, rev in edges:
            if bits[u] == 0 and bits[v] == 1:
                cut += cap
            if bits[v] == 0 and bits[u] == 1:
                cut += rev
        best = min(best, cut)
    return best


def cut_value(side, scap, tcap, edges):
    side = np.asarray(side)
    cut = float(tcap[side].sum() + scap[~side].sum())
    for u, v, cap, rev in edges:
        if side[u] and not side[v]:
            cut += cap
        if side[v] and not side[u]:
            cut += rev
    return cut


def test_terminal_only_flow():
    g = FlowGraph(1)
    g.add_terminal(0, 3.0, 1.0)
    flow, _ = g.solve()
    assert flow == pytest.approx(1.0)


def test_disconnected_terminals_zero_flow():
    g = FlowGraph(2)
    g.add_terminal(0, 5.0, 0.0)
    g.add_terminal(1, 0.0, 5.0)
    flow, side = g.solve()
    assert flow == 0.0
    assert side[0] and not side[1]


def test_chain_bottleneck():
    g = FlowGraph(3)
    g.add_terminal(0, 10.0, 0.0)
    g.add_terminal(2, 0.0, 10.0)
    g.add_edge(0, 1, 4.0)
    g.add_edge(1, 2, 2.5)
    flow, side = g.solve()
    assert flow == pytest.approx(2.5)
    assert side[0] and side[1] and not side[2]


@pytest.mark.parametrize("seed", range(60))
def test_random_graphs_match_cut_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    scap = np.round(rng.uniform(0, 5, n), 3)
    tcap = np.round(rng.uniform(0, 5, n), 3)
    edges = []
    for _ in range(int(rng.integers(0, 14))):
        u, v = rng.choice(n, 2, replace=False)
        edges.append((int(u), int(v), round(float(rng.uniform(0, 4)), 3),
                      round(float(rng.uniform(0, 4)), 3)))
    g = FlowGraph(n)
    g.add_terminal_arrays(scap, tcap)
    for u, v, cap, rev in edges:
        g.add_edge(u, v, cap, rev)
    flow, side = g.solve()
    oracle = brute_force_min_cut(n, scap, tcap, edges)
    assert flow == pytest.approx(oracle, abs=1e-9)
    # the returned partition achieves the same value (flow = cut capacity)
    assert cut_value(side, scap, tcap, edges) == pytest.approx(oracle, abs=1e-9)


def _edmonds_karp(n, scap, tcap, edges):
    """Independent reference max-flow: BFS augmenting paths on a dense
    residual matrix over nodes {0..n-1} plus source n and sink n+1."""
    size = n + 2
    src, snk = n, n + 1
    res = np.zeros((size, size))
    for i in range(n):
        res[src, i] += scap[i]
        res[i, snk] += tcap[i]
    for u, v, cap, rev in edges:
        res[u, v] += cap
        res[v, u] += rev
    flow = 0.0
    while True:
        parent = np.full(size, -1)
        parent[src] = src
        queue = [src]
        while queue and parent[snk] == -1:
            u = queue.pop(0)
            for v in range(size):
                if parent[v] == -1 and res[u, v] > 1e-12:
                    parent[v] = u
                    queue.append(v)
        if parent[snk] == -1:
            return flow
        bottleneck = np.inf
        v = snk
        while v != src:
            bottleneck = min(bottleneck, res[parent[v], v])
            v = parent[v]
        v = snk
        while v != src:
            res[parent[v], v] -= bottleneck
            res[v, parent[v]] += bottleneck
            v = parent[v]
        flow += bottleneck


@pytest.mark.parametrize("seed", range(20))
def test_midsize_graphs_match_reference_solver(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(15, 50))
    scap = np.round(rng.uniform(0, 6, n), 3)
    tcap = np.round(rng.uniform(0, 6, n), 3)
    scap[rng.random(n) < 0.5] = 0.0
    tcap[rng.random(n) < 0.5] = 0.0
    edges = []
    for _ in range(int(rng.integers(n, 4 * n))):
        u, v = rng.choice(n, 2, replace=False)
        edges.append((int(u), int(v), round(float(rng.uniform(0, 5)), 3),
                      round(float(rng.uniform(0, 5)), 3)))
    g = FlowGraph(n)
    g.add_terminal_arrays(scap, tcap)
    for u, v, cap, rev in edges:
        g.add_edge(u, v, cap, rev)
    flow, side = g.solve()
    reference = _edmonds_karp(n, scap, tcap, edges)
    assert flow == pytest.approx(reference, abs=1e-8)
    assert cut_value(side, scap, tcap, edges) == pytest.approx(reference, abs=1e-8)


def test_deterministic_resolution():
    def build():
        g = FlowGraph(4)
        g.add_terminal_arrays([2.0, 0, 0, 0], [0, 0, 0, 2.0])
        g.add_edges([0, 1, 0, 2], [1, 3, 2, 3], [1.0, 1.0, 1.0, 1.0], [0.0] * 4)
        return g.solve()

    f1, s1 = build()
    f2, s2 = build()
    assert f1 == f2
    np.testing.assert_array_equal(s1, s2)


def test_capacity_validation():
    g = FlowGraph(2)
    with pytest.raises(ValueError):
        g.add_edge(0, 1, -1.0)
    with pytest.raises(ValueError):
        g.add_terminal(0, -0.5, 0.0)
    with pytest.raises(ValueError):
        g.add_edge(0, 0, 1.0)

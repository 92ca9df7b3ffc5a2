"""Exact min-cut/max-flow on binary-cut graphs.

Augmenting-path solver that maintains reusable source/sink search trees
(grow / augment / adopt phases), the standard approach for grid-structured
vision graphs. The hot loop is JIT-compiled; capacities stay float64
throughout. Terminal capacities are net-cancelled per node before the
search, which contributes min(source_cap, sink_cap) to the flow value.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_FREE, _S, _T = 0, 1, 2
_NONE, _TERMINAL = -1, -2


class FlowGraph:
    """Binary min-cut graph: per-node terminal capacities plus paired
    directed edges. solve() returns (max flow, source-side node mask)."""

    def __init__(self, n_nodes: int):
        if n_nodes <= 0:
            raise ValueError("graph needs at least one node")
        self.n_nodes = n_nodes
        self._scap = np.zeros(n_nodes, dtype=np.float64)
        self._tcap = np.zeros(n_nodes, dtype=np.float64)
        self._us = []
        self._vs = []
        self._caps = []
        self._revs = []

    def add_terminal(self, node: int, source_cap: float, sink_cap: float) -> None:
        if source_cap < 0 or sink_cap < 0:
            raise ValueError("terminal capacities must be nonnegative")
        self._scap[node] += source_cap
        self._tcap[node] += sink_cap

    def add_terminal_arrays(self, source_caps, sink_caps) -> None:
        s = np.asarray(source_caps, dtype=np.float64)
        t = np.asarray(sink_caps, dtype=np.float64)
        if np.any(s < 0) or np.any(t < 0):
            raise ValueError("terminal capacities must be nonnegative")
        self._scap += s
        self._tcap += t

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> None:
        self.add_edges([u], [v], [cap], [rev_cap])

    def add_edges(self, us, vs, caps, rev_caps) -> None:
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        caps = np.asarray(caps, dtype=np.float64)
        revs = np.asarray(rev_caps, dtype=np.float64)
        if not (len(us) == len(vs) == len(caps) == len(revs)):
            raise ValueError("edge arrays must have equal length")
        if np.any(caps < 0) or np.any(revs < 0):
            raise ValueError("edge capacities must be nonnegative")
        if np.any(us == vs):
            raise ValueError("self-loop edges are not allowed")
        self._us.append(us)
        self._vs.append(vs)
        self._caps.append(caps)
        self._revs.append(revs)

    def solve(self):
        n = self.n_nodes
        if self._us:
            us = np.concatenate(self._us)
            vs = np.concatenate(self._vs)
            caps = np.concatenate(self._caps)
            revs = np.concatenate(self._revs)
            keep = (caps > 0) | (revs > 0)
            us, vs, caps, revs = us[keep], vs[keep], caps[keep], revs[keep]
        else:
            us = np.empty(0, dtype=np.int64)
            vs = np.empty(0, dtype=np.int64)
            caps = revs = np.empty(0, dtype=np.float64)

        m = len(us)
        head = np.empty(2 * m, dtype=np.int64)
        res = np.empty(2 * m, dtype=np.float64)
        tails = np.empty(2 * m, dtype=np.int64)
        head[0::2] = vs
        head[1::2] = us
        res[0::2] = caps
        res[1::2] = revs
        tails[0::2] = us
        tails[1::2] = vs
        adj_arcs = np.argsort(tails, kind="stable").astype(np.int64)
        counts = np.bincount(tails, minlength=n)
        first = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=first[1:])

        base_flow = float(np.minimum(self._scap, self._tcap).sum())
        tr_cap = self._scap - self._tcap
        tree = np.zeros(n, dtype=np.int8)
        flow = _bk_maxflow(first, adj_arcs, head, res, tr_cap, tree)
        return base_flow + flow, tree == _S


@njit(cache=True)
def _bk_maxflow(first, adj_arcs, head, res, tr_cap, tree):  # pragma: no cover
    n = len(tr_cap)
    parent_arc = np.full(n, _NONE, dtype=np.int64)
    dist = np.zeros(n, dtype=np.int64)
    ts = np.zeros(n, dtype=np.int64)

    act_buf = np.empty(n + 1, dtype=np.int64)
    act_head = 0
    act_tail = 0
    in_active = np.zeros(n, dtype=np.bool_)
    orph_buf = np.empty(n + 1, dtype=np.int64)
    orph_head = 0
    orph_tail = 0

    for i in range(n):
        if tr_cap[i] > 0.0:
            tree[i] = _S
            parent_arc[i] = _TERMINAL
            dist[i] = 1
            act_buf[act_tail] = i
            act_tail = (act_tail + 1) % (n + 1)
            in_active[i] = True
        elif tr_cap[i] < 0.0:
            tree[i] = _T
            parent_arc[i] = _TERMINAL
            dist[i] = 1
            act_buf[act_tail] = i
            act_tail = (act_tail + 1) % (n + 1)
            in_active[i] = True

    flow = 0.0
    time = 0
    while True:
        # -- growth --
        conn_arc = _NONE
        conn_u = _NONE
        conn_v = _NONE
        while act_head != act_tail:
            p = act_buf[act_head]
            if tree[p] == _FREE:
                act_head = (act_head + 1) % (n + 1)
                in_active[p] = False
                continue
            tp = tree[p]
            found = False
            for k in range(first[p], first[p + 1]):
                a = adj_arcs[k]
                rcap = res[a] if tp == _S else res[a ^ 1]
                if rcap <= 0.0:
                    continue
                q = head[a]
                tq = tree[q]
                if tq == _FREE:
                    tree[q] = tp
                    parent_arc[q] = a ^ 1
                    ts[q] = ts[p]
                    dist[q] = dist[p] + 1
                    if not in_active[q]:
                        act_buf[act_tail] = q
                        act_tail = (act_tail + 1) % (n + 1)
                        in_active[q] = True
                elif tq != tp:
                    if tp == _S:
                        conn_arc = a
                        conn_u = p
                        conn_v = q
                    else:
                        conn_arc = a ^ 1
                        conn_u = q
                        conn_v = p
                    found = True
                    break
            if found:
                break
            act_head = (act_head + 1) % (n + 1)
            in_active[p] = False
        if conn_arc == _NONE:
            break

        time += 1

        # -- augment --
        bottleneck = res[conn_arc]
        i = conn_u
        while parent_arc[i] != _TERMINAL:
            a = parent_arc[i]
            r = res[a ^ 1]
            if r < bottleneck:
                bottleneck = r
            i = head[a]
        if tr_cap[i] < bottleneck:
            bottleneck = tr_cap[i]
        j = conn_v
        while parent_arc[j] != _TERMINAL:
            a = parent_arc[j]
            r = res[a]
            if r < bottleneck:
                bottleneck = r
            j = head[a]
        if -tr_cap[j] < bottleneck:
            bottleneck = -tr_cap[j]

        res[conn_arc] -= bottleneck
        res[conn_arc ^ 1] += bottleneck
        i = conn_u
        while parent_arc[i] != _TERMINAL:
            a = parent_arc[i]
            res[a] += bottleneck
            res[a ^ 1] -= bottleneck
            nxt = head[a]
            if res[a ^ 1] <= 0.0:
                parent_arc[i] = _NONE
                orph_buf[orph_tail] = i
                orph_tail = (orph_tail + 1) % (n + 1)
            i = nxt
        tr_cap[i] -= bottleneck
        if tr_cap[i] <= 0.0:
            parent_arc[i] = _NONE
            orph_buf[orph_tail] = i
            orph_tail = (orph_tail + 1) % (n + 1)
        j = conn_v
        while parent_arc[j] != _TERMINAL:
            a = parent_arc[j]
            res[a] -= bottleneck
            res[a ^ 1] += bottleneck
            nxt = head[a]
            if res[a] <= 0.0:
                parent_arc[j] = _NONE
                orph_buf[orph_tail] = j
                orph_tail = (orph_tail + 1) % (n + 1)
            j = nxt
        tr_cap[j] += bottleneck
        if tr_cap[j] >= 0.0:
            parent_arc[j] = _NONE
            orph_buf[orph_tail] = j
            orph_tail = (orph_tail + 1) % (n + 1)
        flow += bottleneck

        # -- adopt --
        while orph_head != orph_tail:
            o = orph_buf[orph_head]
            orph_head = (orph_head + 1) % (n + 1)
            k_tree = tree[o]
            best_arc = _NONE
            best_d = np.int64(1) << 60
            for k in range(first[o], first[o + 1]):
                a = adj_arcs[k]
                q = head[a]
                if tree[q] != k_tree:
                    continue
                rcap = res[a ^ 1] if k_tree == _S else res[a]
                if rcap <= 0.0:
                    continue
                # origin check: q must be rooted at a terminal
                d = np.int64(0)
                j = q
                rooted = True
                while True:
                    if ts[j] == time:
                        d += dist[j]
                        break
                    pa = parent_arc[j]
                    if pa == _TERMINAL:
                        d += 1
                        break
                    if pa == _NONE:
                        rooted = False
                        break
                    d += 1
                    j = head[pa]
                if not rooted:
                    continue
                j = q
                dd = d
                while ts[j] != time:
                    dist[j] = dd
                    ts[j] = time
                    dd -= 1
                    pa = parent_arc[j]
                    if pa == _TERMINAL:
                        break
                    j = head[pa]
                if d < best_d:
                    best_d = d
                    best_arc = a
            if best_arc != _NONE:
                parent_arc[o] = best_arc
                ts[o] = time
                dist[o] = best_d + 1
            else:
                for k in range(first[o], first[o + 1]):
                    a = adj_arcs[k]
                    q = head[a]
                    if tree[q] != k_tree:
                        continue
                    rcap = res[a ^ 1] if k_tree == _S else res[a]
                    if rcap > 0.0 and not in_active[q]:
                        act_buf[act_tail] = q
                        act_tail = (act_tail + 1) % (n + 1)
                        in_active[q] = True
                    pa = parent_arc[q]
                    if pa >= 0 and head[pa] == o:
                        parent_arc[q] = _NONE
                        orph_buf[orph_tail] = q
                        orph_tail = (orph_tail + 1) % (n + 1)
                tree[o] = _FREE

    return flow

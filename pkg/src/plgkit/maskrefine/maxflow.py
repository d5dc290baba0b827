"""Max-flow / min-cut on source-sink graphs with terminal and neighbour links.

Dinic's algorithm (BFS level graph + blocking-flow DFS with current-arc
tracking), which behaves well on the shallow grid graphs produced by
segmentation energies. The foreground/background partition is read off as
residual reachability from the source, so by max-flow min-cut duality the
returned flow value equals the capacity of the induced cut.
"""
from __future__ import annotations

from collections import deque

import numpy as np

_EPS = 1e-12


class FlowNetwork:
    """n_nodes inner nodes plus implicit source/sink terminals.

    Terminal capacities are set per node with set_tlink; inner edges are
    undirected n-links carrying the same capacity both ways. All capacities
    must be finite and non-negative.
    """

    def __init__(self, n_nodes: int):
        if n_nodes < 0:
            raise ValueError("n_nodes must be non-negative")
        self.n_nodes = n_nodes
        self.source = n_nodes
        self.sink = n_nodes + 1
        n = n_nodes + 2
        self._head = [[] for _ in range(n)]  # node -> list of edge ids
        self._to: list[int] = []
        self._cap: list[float] = []
        self._tlink_src = np.zeros(n_nodes)
        self._tlink_snk = np.zeros(n_nodes)

    def _check_cap(self, cap: float) -> float:
        cap = float(cap)
        if not np.isfinite(cap) or cap < 0:
            raise ValueError(f"capacity must be finite and >= 0, got {cap}")
        return cap

    def _add_edge(self, a: int, b: int, cap_ab: float, cap_ba: float) -> None:
        self._head[a].append(len(self._to))
        self._to.append(b)
        self._cap.append(cap_ab)
        self._head[b].append(len(self._to))
        self._to.append(a)
        self._cap.append(cap_ba)

    def set_tlink(self, node: int, cap_source: float, cap_sink: float) -> None:
        """Accumulate terminal capacities source->node and node->sink."""
        self._tlink_src[node] += self._check_cap(cap_source)
        self._tlink_snk[node] += self._check_cap(cap_sink)

    def add_nlink(self, a: int, b: int, cap: float) -> None:
        """Undirected neighbour link with the given capacity in both directions."""
        if a == b:
            raise ValueError("self-loops carry no flow")
        cap = self._check_cap(cap)
        self._add_edge(a, b, cap, cap)

    def max_flow(self) -> tuple[float, np.ndarray]:
        """Run Dinic's algorithm; returns (flow value, foreground membership).

        The boolean array marks nodes on the source side of the minimum cut.
        """
        for node in range(self.n_nodes):
            if self._tlink_src[node] > 0:
                self._add_edge(self.source, node, float(self._tlink_src[node]), 0.0)
            if self._tlink_snk[node] > 0:
                self._add_edge(node, self.sink, float(self._tlink_snk[node]), 0.0)
        # t-links are folded into edges once per solve
        self._tlink_src[:] = 0.0
        self._tlink_snk[:] = 0.0

        to, cap, head = self._to, self._cap, self._head
        n = self.n_nodes + 2
        source, sink = self.source, self.sink
        flow = 0.0
        level = [0] * n
        it = [0] * n

        def bfs() -> bool:
            for i in range(n):
                level[i] = -1
            level[source] = 0
            queue = deque([source])
            while queue:
                u = queue.popleft()
                for eid in head[u]:
                    v = to[eid]
                    if cap[eid] > _EPS and level[v] < 0:
                        level[v] = level[u] + 1
                        queue.append(v)
            return level[sink] >= 0

        def dfs(u: int, pushed: float) -> float:
            if u == sink:
                return pushed
            while it[u] < len(head[u]):
                eid = head[u][it[u]]
                v = to[eid]
                if cap[eid] > _EPS and level[v] == level[u] + 1:
                    got = dfs(v, min(pushed, cap[eid]))
                    if got > _EPS:
                        cap[eid] -= got
                        cap[eid ^ 1] += got
                        return got
                it[u] += 1
            return 0.0

        import sys

        old_limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old_limit, n + 100))
        try:
            while bfs():
                for i in range(n):
                    it[i] = 0
                while True:
                    pushed = dfs(source, np.inf)
                    if pushed <= _EPS:
                        break
                    flow += pushed
        finally:
            sys.setrecursionlimit(old_limit)

        reachable = np.zeros(n, dtype=bool)
        reachable[source] = True
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for eid in head[u]:
                v = to[eid]
                if cap[eid] > _EPS and not reachable[v]:
                    reachable[v] = True
                    queue.append(v)
        return flow, reachable[:self.n_nodes]


def max_flow_min_cut(network: FlowNetwork) -> tuple[float, np.ndarray]:
    """Maximum flow and the source-side (foreground) partition of the network."""
    return network.max_flow()

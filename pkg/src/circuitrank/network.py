"""Tensor networks of non-overlapping circuits and multiplicative min-cuts.

The graph of a circuit is tree shaped: one terminal per input position,
one node per mode-tree node, edges weighted by the channel count flowing
across the link. The minimal product of edge weights over cuts separating
one terminal group from the other bounds the separation rank the circuit
can realize, and for binary trees the bound is met by generic weights.

The min-cut solver runs max-flow on logarithmic capacities and reconstructs
the product of the chosen cut edges in exact integer arithmetic; an
exhaustive enumeration over node bipartitions serves as the independent
check and supplies the lexicographic tie-break for the reported edge set.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .tensor import Partition
from .trees import ModeTree, PoolingSchedule, tree_from_schedule

_EPS = 1e-10


@dataclass(frozen=True)
class TensorNetworkGraph:
    """Undirected weighted graph with degree-1 terminals labeled 1..N."""

    num_nodes: int
    terminals: tuple[int, ...]
    edges: tuple[tuple[int, int, int], ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        edges = tuple((int(u), int(v), int(w)) for u, v, w in self.edges)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "terminals", tuple(int(t) for t in self.terminals))
        if self.labels:
            if len(self.labels) != self.num_nodes:
                raise ValueError("one label per node required")
        degree = [0] * self.num_nodes
        for u, v, w in edges:
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes) or u == v:
                raise ValueError(f"bad edge ({u}, {v})")
            if w < 1:
                raise ValueError("edge weights must be positive integers")
            degree[u] += 1
            degree[v] += 1
        for t in self.terminals:
            if degree[t] != 1:
                raise ValueError(f"terminal node {t} must have degree 1")
        if len(set(self.terminals)) != len(self.terminals):
            raise ValueError("terminal nodes must be distinct")
        # connectivity
        adj: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v, _ in edges:
            adj[u].append(v)
            adj[v].append(u)
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        if len(seen) != self.num_nodes:
            raise ValueError("graph must be connected")

    @property
    def num_terminals(self) -> int:
        return len(self.terminals)


def tensor_network_from_tree(tree: ModeTree, mode_length: int,
                             widths) -> TensorNetworkGraph:
    """Graph of the circuit whose pooling pattern is the given mode tree.

    Terminal edges carry the representation width M. The edge between a node
    and its parent carries the channel count a cut there actually severs:
    the child's emission (M for leaves, the child's width otherwise) capped
    by the parent's width, since the parent's mix happens on its own channel
    count.
    """
    if isinstance(widths, int):
        widths = {node.modes: widths for node in tree.internal_nodes_bottom_up()}
    n = tree.order
    labels = [f"t{i}" for i in range(1, n + 1)]
    index: dict[frozenset[int], int] = {}
    edges: list[tuple[int, int, int]] = []

    def add_node(label: str) -> int:
        labels.append(label)
        return len(labels) - 1

    def visit(node: ModeTree) -> int:
        if node.is_leaf:
            idx = add_node(f"leaf{node.leaf_mode}")
            edges.append((node.leaf_mode - 1, idx, mode_length))
            return idx
        idx = add_node("{" + ",".join(map(str, sorted(node.modes))) + "}")
        index[node.modes] = idx
        for child in node.children:
            cidx = visit(child)
            emission = mode_length if child.is_leaf else widths[child.modes]
            edges.append((cidx, idx, min(emission, widths[node.modes])))
        return idx

    visit(tree)
    return TensorNetworkGraph(len(labels), tuple(range(n)), tuple(edges), tuple(labels))


def build_tensor_network(schedule_or_circuit, mode_length: int | None = None,
                         widths=None) -> TensorNetworkGraph:
    """Tensor network of a non-overlapping circuit or (schedule, M, widths) triple."""
    if hasattr(schedule_or_circuit, "schedule"):
        c = schedule_or_circuit
        if c.is_overlapping:
            raise ValueError("overlapping circuits have no tree-shaped tensor network")
        schedule, mode_length, layer_widths = c.schedule, c.mode_length, c.widths
    else:
        schedule = schedule_or_circuit
        if schedule.has_overlaps:
            raise ValueError("overlapping schedules have no tree-shaped tensor network")
        if mode_length is None or widths is None:
            raise ValueError("mode_length and widths are required with a schedule")
        layer_widths = (widths,) * schedule.num_layers if isinstance(widths, int) \
            else tuple(widths)
    tree = tree_from_schedule(schedule)
    node_widths: dict[frozenset[int], int] = {}
    current: list[frozenset[int]] = [frozenset({i}) for i in
                                     range(1, schedule.spatial_size + 1)]
    for layer, width in zip(schedule.layers, layer_widths):
        nxt = []
        for window in layer:
            modes = frozenset().union(*(current[p - 1] for p in window))
            if len(window) > 1:
                node_widths[modes] = width
            nxt.append(modes)
        current = nxt
    return tensor_network_from_tree(tree, mode_length, node_widths)


def _terminal_groups(g: TensorNetworkGraph, p: Partition) -> tuple[list[int], list[int]]:
    if p.total_modes != g.num_terminals:
        raise ValueError(
            f"partition over {p.total_modes} modes, graph has {g.num_terminals} terminals"
        )
    return [g.terminals[i - 1] for i in p.left], [g.terminals[j - 1] for j in p.right]


def _max_flow_cut(g: TensorNetworkGraph, sources: list[int], sinks: list[int]) -> list[int]:
    """Edge indices of a minimum cut, via max-flow on log-weight capacities."""
    n = g.num_nodes + 2
    s, t = g.num_nodes, g.num_nodes + 1
    head: list[int] = []
    cap: list[float] = []
    adj: list[list[int]] = [[] for _ in range(n)]

    def add(u, v, c):
        adj[u].append(len(head))
        head.append(v)
        cap.append(c)
        adj[v].append(len(head))
        head.append(u)
        cap.append(0.0)

    for u, v, w in g.edges:
        c = math.log(w)
        add(u, v, c)
        add(v, u, c)
    inf = float("inf")
    for u in sources:
        add(s, u, inf)
    for v in sinks:
        add(v, t, inf)

    while True:
        parent_arc = [-1] * n
        parent_arc[s] = -2
        queue = deque([s])
        while queue and parent_arc[t] == -1:
            u = queue.popleft()
            for a in adj[u]:
                v = head[a]
                if parent_arc[v] == -1 and cap[a] > _EPS:
                    parent_arc[v] = a
                    queue.append(v)
        if parent_arc[t] == -1:
            break
        bottleneck = inf
        v = t
        while v != s:
            a = parent_arc[v]
            bottleneck = min(bottleneck, cap[a])
            v = head[a ^ 1]
        v = t
        while v != s:
            a = parent_arc[v]
            cap[a] -= bottleneck
            cap[a ^ 1] += bottleneck
            v = head[a ^ 1]

    reach = [False] * n
    reach[s] = True
    queue = deque([s])
    while queue:
        u = queue.popleft()
        for a in adj[u]:
            v = head[a]
            if not reach[v] and cap[a] > _EPS:
                reach[v] = True
                queue.append(v)
    return [i for i, (u, v, _) in enumerate(g.edges) if reach[u] != reach[v]]


def min_multiplicative_cut(g: TensorNetworkGraph, p: Partition) -> int:
    """Minimum over terminal-separating edge cuts of the product of cut weights.

    Solved as a max-flow with capacities log(weight); the returned value is
    the exact integer product over the selected cut edges.
    """
    sources, sinks = _terminal_groups(g, p)
    cut = _max_flow_cut(g, sources, sinks)
    value = 1
    for i in cut:
        value *= g.edges[i][2]
    return value


def enumerate_min_cut(g: TensorNetworkGraph, p: Partition) -> tuple[int, tuple[int, ...]]:
    """Exhaustive minimum multiplicative cut over all node bipartitions.

    Returns the exact value and the lexicographically smallest cut edge set
    among the minima. Independent of the flow solver; exponential in the
    number of non-terminal nodes, fine at desk scale.
    """
    sources, sinks = _terminal_groups(g, p)
    side = np.full(g.num_nodes, -1, dtype=np.int8)
    side[sources] = 0
    side[sinks] = 1
    free = np.flatnonzero(side == -1)
    k = len(free)
    if k > 24:
        raise ValueError(f"{k} free nodes is too many for exhaustive enumeration")
    masks = np.arange(1 << k, dtype=np.uint32)
    assign = np.zeros((1 << k, g.num_nodes), dtype=bool)
    assign[:, side == 1] = True
    for bit, node in enumerate(free):
        assign[:, node] = (masks >> bit) & 1

    eu = np.array([e[0] for e in g.edges])
    ev = np.array([e[1] for e in g.edges])
    logw = np.log([e[2] for e in g.edges])
    crossing = assign[:, eu] != assign[:, ev]
    scores = crossing @ logw
    best_score = scores.min()
    candidates = np.flatnonzero(scores <= best_score + 1e-6)

    best: tuple[int, tuple[int, ...]] | None = None
    for c in candidates:
        edges = tuple(np.flatnonzero(crossing[c]).tolist())
        value = 1
        for i in edges:
            value *= g.edges[i][2]
        key = (value, edges)
        if best is None or key < best:
            best = key
    assert best is not None
    return best


def min_cut_edges(g: TensorNetworkGraph, p: Partition) -> tuple[int, tuple[int, ...]]:
    """Exact min-cut value plus the lexicographically smallest witnessing edge set."""
    return enumerate_min_cut(g, p)


def advise_widths(schedule: PoolingSchedule, mode_length: int, budget: int,
                  target_partitions) -> dict:
    """Exhaustive search over per-layer widths within a total-width budget.

    Maximizes the minimum over target partitions of the multiplicative
    min-cut; ties resolve to the lexicographically smallest assignment.
    """
    if schedule.has_overlaps:
        raise ValueError("width advice is defined for non-overlapping schedules")
    targets = list(target_partitions)
    if not targets:
        raise ValueError("at least one target partition is required")
    num_free = schedule.num_layers
    if budget < num_free:
        raise ValueError(f"budget {budget} cannot give {num_free} layers width >= 1")

    best_widths: tuple[int, ...] | None = None
    best_value = -1
    best_cuts: list[int] = []

    def search(prefix: tuple[int, ...], remaining: int):
        nonlocal best_widths, best_value, best_cuts
        depth = len(prefix)
        if depth == num_free:
            graph = build_tensor_network(schedule, mode_length, prefix)
            cuts = [min_multiplicative_cut(graph, p) for p in targets]
            value = min(cuts)
            if value > best_value:
                best_widths, best_value, best_cuts = prefix, value, cuts
            return
        slots_left = num_free - depth - 1
        for w in range(1, remaining - slots_left + 1):
            search(prefix + (w,), remaining - w)

    search((), budget)
    assert best_widths is not None
    return {
        "widths": list(best_widths),
        "objective": best_value,
        "per_target": [
            {"partition": p.label(), "min_cut": cut}
            for p, cut in zip(targets, best_cuts)
        ],
        "budget": budget,
    }

"""Mode trees, pooling schedules, and canonical mode partitions.

A mode tree is the structural skeleton shared by a hierarchical tensor
generator and a circuit's pooling schedule: a rooted full tree whose leaves
biject onto tensor modes and whose internal nodes cover the disjoint union
of their children's modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .tensor import Partition

Window = tuple[int, ...]
Layer = tuple[Window, ...]


@dataclass(frozen=True)
class ModeTree:
    children: tuple["ModeTree", ...] = ()
    leaf_mode: int | None = None
    modes: frozenset[int] = field(init=False)

    def __post_init__(self):
        if self.children:
            if self.leaf_mode is not None:
                raise ValueError("internal node cannot carry a leaf mode")
            if len(self.children) < 2:
                raise ValueError("internal nodes need at least 2 children")
            union: set[int] = set()
            for c in self.children:
                if union & c.modes:
                    raise ValueError("children mode sets must be disjoint")
                union |= c.modes
            object.__setattr__(self, "modes", frozenset(union))
        else:
            if self.leaf_mode is None or self.leaf_mode < 1:
                raise ValueError("leaf needs a positive mode index")
            object.__setattr__(self, "modes", frozenset({self.leaf_mode}))

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def order(self) -> int:
        return len(self.modes)

    def leaves(self) -> list["ModeTree"]:
        if self.is_leaf:
            return [self]
        out: list[ModeTree] = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def internal_nodes_bottom_up(self) -> list["ModeTree"]:
        """Internal nodes, children always before parents."""
        out: list[ModeTree] = []
        for c in self.children:
            out.extend(c.internal_nodes_bottom_up())
        if not self.is_leaf:
            out.append(self)
        return out

    def node_by_modes(self, modes: frozenset[int]) -> "ModeTree | None":
        if self.modes == modes:
            return self
        for c in self.children:
            if modes <= c.modes:
                return c.node_by_modes(modes)
        return None

    def all_mode_sets(self) -> set[frozenset[int]]:
        out = {self.modes}
        for c in self.children:
            out |= c.all_mode_sets()
        return out

    def validate_complete(self) -> None:
        """Check that the leaves biject onto 1..N."""
        modes = sorted(leaf.leaf_mode for leaf in self.leaves())
        if modes != list(range(1, len(modes) + 1)):
            raise ValueError(f"leaves must biject onto 1..N, got modes {modes}")

    def to_json_dict(self) -> dict:
        if self.is_leaf:
            return {"mode": self.leaf_mode}
        return {"children": [c.to_json_dict() for c in self.children]}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ModeTree":
        if "mode" in obj:
            return leaf(obj["mode"])
        return node([cls.from_json_dict(c) for c in obj["children"]])


def leaf(mode: int) -> ModeTree:
    return ModeTree(leaf_mode=mode)


def node(children: Sequence[ModeTree]) -> ModeTree:
    return ModeTree(children=tuple(children))


def perfect_binary_tree(n: int) -> ModeTree:
    """Perfect binary mode tree over 1..n, n a power of two."""
    if n < 2 or n & (n - 1):
        raise ValueError(f"n must be a power of two >= 2, got {n}")

    def build(lo: int, hi: int) -> ModeTree:
        if hi - lo == 1:
            return leaf(lo)
        mid = (lo + hi) // 2
        return node([build(lo, mid), build(mid, hi)])

    return build(1, n + 1)


def dilation_tree(n: int, order: Sequence[int] | None = None) -> ModeTree:
    """Full binary tree whose level-l pairing stride is 2**(order[l]-1).

    ``order`` permutes the levels 1..log2(n); the identity order pairs
    adjacent positions first and doubles the pairing stride per level,
    reproducing ``perfect_binary_tree``. Permuted orders model networks
    whose dilations are rearranged across layers.
    """
    if n < 2 or n & (n - 1):
        raise ValueError(f"n must be a power of two >= 2, got {n}")
    k = n.bit_length() - 1
    if order is None:
        order = tuple(range(1, k + 1))
    order = tuple(order)
    if sorted(order) != list(range(1, k + 1)):
        raise ValueError(f"order must be a permutation of 1..{k}, got {order}")

    # Positions 0..n-1 as k-bit numbers; level l merges nodes differing in
    # bit order[l]-1. A node is keyed by the values of its still-fixed bits.
    nodes: dict[tuple[tuple[int, int], ...], ModeTree] = {
        tuple((b, (p >> b) & 1) for b in range(k)): leaf(p + 1) for p in range(n)
    }
    for level in range(1, k + 1):
        bit = order[level - 1] - 1
        merged: dict[tuple[tuple[int, int], ...], ModeTree] = {}
        grouped: dict[tuple[tuple[int, int], ...], dict[int, ModeTree]] = {}
        for key, sub in nodes.items():
            rest = tuple((b, v) for b, v in key if b != bit)
            val = dict(key)[bit]
            grouped.setdefault(rest, {})[val] = sub
        for rest, pair in grouped.items():
            merged[rest] = node([pair[0], pair[1]])
        nodes = merged
    (root,) = nodes.values()
    return root


@dataclass(frozen=True)
class PoolingSchedule:
    """Layered pooling windows over positions 1..spatial_size.

    Each layer lists windows of current-position indices; the windows of a
    non-overlapping layer partition the positions, while stride-1 layers
    share positions between consecutive windows. The last layer must leave
    a single position.
    """

    spatial_size: int
    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(tuple(tuple(w) for w in layer) for layer in self.layers)
        object.__setattr__(self, "layers", layers)
        if self.spatial_size < 1:
            raise ValueError("spatial_size must be >= 1")
        if not layers:
            raise ValueError("schedule needs at least one layer")
        length = self.spatial_size
        for idx, layer in enumerate(layers, start=1):
            if not layer:
                raise ValueError(f"layer {idx} has no windows")
            seen: set[int] = set()
            for w in layer:
                if not w:
                    raise ValueError(f"layer {idx} has an empty window")
                if any(pos < 1 or pos > length for pos in w):
                    raise ValueError(
                        f"layer {idx} window {w} out of range for length {length}"
                    )
                if len(set(w)) != len(w):
                    raise ValueError(f"layer {idx} window {w} repeats a position")
                seen.update(w)
            if seen != set(range(1, length + 1)):
                raise ValueError(f"layer {idx} windows must cover all {length} positions")
            length = len(layer)
        if length != 1:
            raise ValueError("final layer must reduce to a single position")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def layer_is_overlapping(self, index: int) -> bool:
        layer = self.layers[index]
        total = sum(len(w) for w in layer)
        return total != len({pos for w in layer for pos in w})

    @property
    def has_overlaps(self) -> bool:
        return any(self.layer_is_overlapping(i) for i in range(self.num_layers))

    def to_json_dict(self) -> dict:
        return {
            "spatial_size": self.spatial_size,
            "layers": [[list(w) for w in layer] for layer in self.layers],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "PoolingSchedule":
        return cls(
            spatial_size=obj["spatial_size"],
            layers=tuple(tuple(tuple(w) for w in layer) for layer in obj["layers"]),
        )


def baseline_schedule(n: int) -> PoolingSchedule:
    """Size-2 non-overlapping pooling at every layer; n must be a power of two."""
    if n < 2 or n & (n - 1):
        raise ValueError(f"n must be a power of two >= 2, got {n}")
    layers: list[Layer] = []
    length = n
    while length > 1:
        layers.append(tuple((2 * i + 1, 2 * i + 2) for i in range(length // 2)))
        length //= 2
    return PoolingSchedule(n, tuple(layers))


def shallow_schedule(n: int) -> PoolingSchedule:
    """A single global pooling window over all positions."""
    if n < 2:
        raise ValueError("shallow schedule needs at least 2 positions")
    return PoolingSchedule(n, (tuple([tuple(range(1, n + 1))]),))


def mirror_schedule(n: int) -> PoolingSchedule:
    """First layer pools reflecting positions (1,n),(2,n-1),...; then baseline."""
    if n < 4 or n & (n - 1):
        raise ValueError(f"n must be a power of two >= 4, got {n}")
    first: Layer = tuple((i, n + 1 - i) for i in range(1, n // 2 + 1))
    rest = baseline_schedule(n // 2).layers
    return PoolingSchedule(n, (first,) + rest)


def stride1_schedule(n: int, window: int = 2) -> PoolingSchedule:
    """Overlapping schedule: every layer slides a size-``window`` window at stride 1.

    Each layer shrinks the spatial length by window-1 (no padding), down to a
    single position.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    if n < window:
        raise ValueError(f"need at least {window} positions, got {n}")
    if (n - 1) % (window - 1):
        raise ValueError(f"length {n} does not reduce to 1 with window {window}, stride 1")
    layers: list[Layer] = []
    length = n
    while length > 1:
        layers.append(tuple(tuple(range(p, p + window)) for p in range(1, length - window + 2)))
        length -= window - 1
    return PoolingSchedule(n, tuple(layers))


def tree_from_schedule(s: PoolingSchedule) -> ModeTree:
    """The unique mode tree of a non-overlapping schedule.

    Raises if any layer overlaps: overlapping schedules have no single mode
    tree. Size-1 windows pass their subtree through unchanged.
    """
    if s.has_overlaps:
        raise ValueError("schedule contains an overlapping layer; no single mode tree exists")
    current: list[ModeTree] = [leaf(i) for i in range(1, s.spatial_size + 1)]
    for layer in s.layers:
        nxt: list[ModeTree] = []
        for w in layer:
            subs = [current[pos - 1] for pos in w]
            nxt.append(subs[0] if len(subs) == 1 else node(subs))
        current = nxt
    root = current[0]
    root.validate_complete()
    return root


def schedule_coverage(s: PoolingSchedule) -> list[list[frozenset[int]]]:
    """Input modes covered by each position after each layer (index 0 = inputs)."""
    cov: list[list[frozenset[int]]] = [[frozenset({i}) for i in range(1, s.spatial_size + 1)]]
    for layer in s.layers:
        prev = cov[-1]
        cov.append([frozenset().union(*(prev[pos - 1] for pos in w)) for w in layer])
    return cov


def even_odd_partition(n: int) -> Partition:
    if n < 2 or n % 2:
        raise ValueError(f"even-odd partition needs even n >= 2, got {n}")
    return Partition.from_left(n, range(1, n + 1, 2))


def contiguous_halves_partition(n: int) -> Partition:
    if n < 2 or n % 2:
        raise ValueError(f"contiguous halves partition needs even n >= 2, got {n}")
    return Partition.from_left(n, range(1, n // 2 + 1))


def window_splitting_partition(s: PoolingSchedule, layer_index: int) -> Partition:
    """Split every pooling window of the given layer across the partition.

    The left side collects the input modes covered by the lowest-indexed
    position of each window of layer ``layer_index`` (1-based).
    """
    if not 1 <= layer_index <= s.num_layers:
        raise ValueError(f"layer index {layer_index} out of range 1..{s.num_layers}")
    if s.layer_is_overlapping(layer_index - 1):
        raise ValueError("window splitting is defined for non-overlapping layers")
    cov = schedule_coverage(s)[layer_index - 1]
    left: set[int] = set()
    for w in s.layers[layer_index - 1]:
        if len(w) < 2:
            raise ValueError("window splitting needs windows of size >= 2")
        left |= cov[min(w) - 1]
    return Partition.from_left(s.spatial_size, left)


def resolve_partition(kind, n: int, schedule: PoolingSchedule | None = None) -> Partition:
    """Resolve a canonical partition description.

    ``kind`` is ``"even_odd"``, ``"contiguous_halves"``,
    ``("window_splitting", layer)`` or ``("custom", left_modes)``. Window
    splitting uses ``schedule`` when given and the baseline size-2 schedule
    otherwise.
    """
    if kind == "even_odd":
        return even_odd_partition(n)
    if kind == "contiguous_halves":
        return contiguous_halves_partition(n)
    if isinstance(kind, (tuple, list)) and len(kind) == 2:
        tag, arg = kind
        if tag == "window_splitting":
            sched = schedule if schedule is not None else baseline_schedule(n)
            return window_splitting_partition(sched, int(arg))
        if tag == "custom":
            return Partition.from_left(n, arg)
    raise ValueError(f"unknown partition kind {kind!r}")


def all_mode_partitions(n: int) -> list[Partition]:
    """Every two-way partition of 1..n, one representative per (I,J)/(J,I) pair.

    The representative keeps mode 1 on the left; there are 2**(n-1) - 1
    partitions.
    """
    out = []
    rest = list(range(2, n + 1))
    for mask in range(2 ** (n - 1) - 1):
        left = [1] + [m for i, m in enumerate(rest) if mask >> i & 1]
        out.append(Partition.from_left(n, left))
    return out

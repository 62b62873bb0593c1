"""Forward evaluation of convolutional circuits and grid-tensor extraction.

A circuit maps N grid-point indices to a real value: a representation layer
turns each position into an M-vector (the basis indicator of the grid index
by default), every hidden layer applies per-window 1x1 channel mixing
followed by window pooling under the chosen activation/pooling operator, and
a dense output layer combines the final channels. Exhaustively evaluating
all M**N inputs yields the circuit's grid tensor.

Non-overlapping circuits with the arithmetic operator are exactly the
tree-shaped generators of :mod:`circuitrank.generators`; the mapping is
implemented here and exercised by the oracle tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .generators import HierarchicalParams
from .tensor import ARITHMETIC, DenseTensor, MemoryGuardError, OperatorSpec
from .trees import (
    ModeTree,
    PoolingSchedule,
    baseline_schedule,
    shallow_schedule,
    stride1_schedule,
    tree_from_schedule,
)

DEFAULT_ENTRY_GUARD = 10**7


def grid_points(mode_length: int) -> np.ndarray:
    """The discretization points {1/M, 2/M, ..., M/M} of the unit interval."""
    return np.arange(1, mode_length + 1) / mode_length


@dataclass(frozen=True, eq=False)
class CircuitSpec:
    """Architecture and weights of a convolutional circuit.

    ``conv_weights[layer][window]`` has shape (layer width, window size,
    input channels); the input channel count is the mode length at the first
    layer and the previous layer's width afterwards. ``representation`` is
    None for the basis (one-hot grid) representation, or an (M, M) table
    whose entry [d, j] is the d-th representation function evaluated at the
    j-th grid point.
    """

    mode_length: int
    schedule: PoolingSchedule
    widths: tuple[int, ...]
    op: OperatorSpec
    conv_weights: tuple[tuple[np.ndarray, ...], ...]
    output_weights: np.ndarray
    representation: np.ndarray | None = None

    def __post_init__(self):
        if self.mode_length < 1:
            raise ValueError("mode_length must be >= 1")
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) != self.schedule.num_layers:
            raise ValueError(
                f"{len(widths)} widths for {self.schedule.num_layers} layers"
            )
        if any(w < 1 for w in widths):
            raise ValueError("layer widths must be >= 1")
        conv = tuple(
            tuple(np.asarray(a, dtype=np.float64) for a in layer)
            for layer in self.conv_weights
        )
        object.__setattr__(self, "conv_weights", conv)
        in_ch = self.mode_length
        for idx, (layer, arrays) in enumerate(zip(self.schedule.layers, conv)):
            if len(arrays) != len(layer):
                raise ValueError(f"layer {idx + 1}: one weight array per window required")
            for w, arr in zip(layer, arrays):
                expected = (widths[idx], len(w), in_ch)
                if arr.shape != expected:
                    raise ValueError(
                        f"layer {idx + 1} window {w}: weight shape {arr.shape}, "
                        f"expected {expected}"
                    )
            in_ch = widths[idx]
        out = np.asarray(self.output_weights, dtype=np.float64)
        if out.shape != (widths[-1],):
            raise ValueError(
                f"output weights shape {out.shape} does not match final width {widths[-1]}"
            )
        object.__setattr__(self, "output_weights", out)
        if self.representation is not None:
            rep = np.asarray(self.representation, dtype=np.float64)
            if rep.shape != (self.mode_length, self.mode_length):
                raise ValueError("representation table must be (M, M)")
            object.__setattr__(self, "representation", rep)

    @property
    def num_positions(self) -> int:
        return self.schedule.spatial_size

    @property
    def is_overlapping(self) -> bool:
        return self.schedule.has_overlaps

    def representation_rows(self) -> np.ndarray:
        """Row j-1 is the representation vector of grid index j."""
        if self.representation is None:
            return np.eye(self.mode_length)
        return self.representation.T

    def to_json_dict(self) -> dict:
        return {
            "mode_length": self.mode_length,
            "schedule": self.schedule.to_json_dict(),
            "widths": list(self.widths),
            "activation": self.op.activation,
            "pooling": self.op.pooling,
            "conv_weights": [[a.tolist() for a in layer] for layer in self.conv_weights],
            "output_weights": self.output_weights.tolist(),
            "representation": None if self.representation is None
            else self.representation.tolist(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CircuitSpec":
        schedule = PoolingSchedule.from_json_dict(obj["schedule"])
        op = OperatorSpec(obj.get("activation", "identity"), obj.get("pooling", "product"))
        if "conv_weights" in obj:
            return cls(
                mode_length=obj["mode_length"],
                schedule=schedule,
                widths=tuple(obj["widths"]),
                op=op,
                conv_weights=tuple(
                    tuple(np.asarray(a) for a in layer) for layer in obj["conv_weights"]
                ),
                output_weights=np.asarray(obj["output_weights"]),
                representation=None if obj.get("representation") is None
                else np.asarray(obj["representation"]),
            )
        if "seed" not in obj:
            raise ValueError("circuit JSON needs either conv_weights or a seed")
        return sample_circuit(schedule, obj["mode_length"], tuple(obj["widths"]), op,
                              obj["seed"])


def _forward_batch(c: CircuitSpec, indices: np.ndarray) -> np.ndarray:
    """Evaluate a (batch, N) array of 1-based grid indices."""
    values = c.representation_rows()[indices - 1]  # (batch, positions, channels)
    for layer, arrays in zip(c.schedule.layers, c.conv_weights):
        pooled = []
        for window, weight in zip(layer, arrays):
            gathered = values[:, np.asarray(window) - 1, :]
            mixed = np.einsum("bki,cki->bck", gathered, weight)
            act = c.op.activate(mixed)
            if c.op.pooling == "product":
                pooled.append(act.prod(axis=2))
            elif c.op.pooling == "max":
                pooled.append(act.max(axis=2))
            else:
                pooled.append(act.mean(axis=2))
        values = np.stack(pooled, axis=1)
    return values[:, 0, :] @ c.output_weights


def forward_eval(c: CircuitSpec, x: Sequence[int]) -> float:
    """Value of the circuit on one input of 1-based grid indices."""
    idx = np.asarray(x, dtype=np.int64)
    if idx.shape != (c.num_positions,):
        raise ValueError(f"expected {c.num_positions} grid indices, got {idx.shape}")
    if idx.min() < 1 or idx.max() > c.mode_length:
        raise ValueError(f"grid indices must lie in 1..{c.mode_length}")
    return float(_forward_batch(c, idx[None, :])[0])


def grid_tensor(c: CircuitSpec, max_entries: int = DEFAULT_ENTRY_GUARD) -> DenseTensor:
    """Evaluate the circuit on the full grid.

    The order-N result has all modes of length M; entry (d1..dN) is the
    forward value at those grid indices. Refuses to build more than
    ``max_entries`` entries.
    """
    n, m = c.num_positions, c.mode_length
    size = m**n
    if size > max_entries:
        raise MemoryGuardError(
            f"grid tensor would hold {size} entries, over the guard of {max_entries}"
        )
    out = np.empty(size)
    shape = (m,) * n
    chunk = 1 << 14
    for start in range(0, size, chunk):
        flat = np.arange(start, min(start + chunk, size))
        idx = np.stack(np.unravel_index(flat, shape), axis=1) + 1
        out[start:start + len(flat)] = _forward_batch(c, idx)
    return DenseTensor(out.reshape(shape))


def map_to_decomposition(c: CircuitSpec) -> HierarchicalParams:
    """Parameters of the tree generator whose output equals the grid tensor.

    Defined for non-overlapping schedules under the basis representation;
    conv and output weights transfer directly. Size-1 windows are folded
    into the consuming node's coefficients.
    """
    if c.is_overlapping:
        raise ValueError("overlapping schedules have no single-tree equivalent")
    if c.representation is not None:
        raise ValueError("mapping is defined for the basis (one-hot) representation only")

    current: list[tuple[ModeTree, np.ndarray | None]] = [
        (ModeTree(leaf_mode=i), None) for i in range(1, c.num_positions + 1)
    ]
    widths: dict[frozenset[int], int] = {}
    coefficients: dict[frozenset[int], tuple[np.ndarray, ...]] = {}
    for layer, arrays, width in zip(c.schedule.layers, c.conv_weights, c.widths):
        nxt: list[tuple[ModeTree, np.ndarray | None]] = []
        for window, weight in zip(layer, arrays):
            subs = [current[pos - 1] for pos in window]
            if len(subs) == 1:
                tree, pending = subs[0]
                mat = weight[:, 0, :]
                nxt.append((tree, mat if pending is None else mat @ pending))
                continue
            parts = []
            for j, (tree, pending) in enumerate(subs):
                mat = weight[:, j, :]
                parts.append(mat if pending is None else mat @ pending)
            node = ModeTree(children=tuple(t for t, _ in subs))
            widths[node.modes] = width
            coefficients[node.modes] = tuple(parts)
            nxt.append((node, None))
        current = nxt
    root, pending = current[0]
    output = c.output_weights if pending is None else pending.T @ c.output_weights
    return HierarchicalParams(root, c.mode_length, widths, coefficients, output)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def sample_circuit(schedule: PoolingSchedule, mode_length: int, widths,
                   op: OperatorSpec, seed) -> CircuitSpec:
    """Standard-normal weights from a seeded generator, in layer/window order."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if isinstance(widths, int):
        widths = (widths,) * schedule.num_layers
    widths = tuple(widths)
    conv = []
    in_ch = mode_length
    for layer, width in zip(schedule.layers, widths):
        conv.append(tuple(rng.standard_normal((width, len(w), in_ch)) for w in layer))
        in_ch = width
    output = rng.standard_normal(widths[-1])
    return CircuitSpec(mode_length, schedule, widths, op, tuple(conv), output)


def deep_circuit(n: int, mode_length: int, widths, seed,
                 op: OperatorSpec = ARITHMETIC) -> CircuitSpec:
    """Baseline deep circuit: size-2 non-overlapping pooling at every layer."""
    return sample_circuit(baseline_schedule(n), mode_length, widths, op, seed)


def shallow_circuit(n: int, mode_length: int, num_channels: int, seed,
                    op: OperatorSpec = ARITHMETIC) -> CircuitSpec:
    """Single hidden layer with one global pooling window."""
    return sample_circuit(shallow_schedule(n), mode_length, num_channels, op, seed)


def shallow_circuit_from_cp(order: int, vectors: np.ndarray,
                            weights: np.ndarray) -> CircuitSpec:
    """Shallow arithmetic circuit with position-shared filters.

    Channel g applies the same vector at every position, so the grid tensor
    is the weighted sum of N-fold self outer products of the vectors.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    num_terms, m = vectors.shape
    weight = np.repeat(vectors[:, None, :], order, axis=1)
    return CircuitSpec(
        mode_length=m,
        schedule=shallow_schedule(order),
        widths=(num_terms,),
        op=ARITHMETIC,
        conv_weights=((weight,),),
        output_weights=np.asarray(weights, dtype=np.float64),
    )


def overlapping_circuit(n: int, mode_length: int, widths, seed, window: int = 2,
                        op: OperatorSpec = ARITHMETIC) -> CircuitSpec:
    """Stride-1 circuit: every layer slides a size-``window`` window at stride 1."""
    return sample_circuit(stride1_schedule(n, window), mode_length, widths, op, seed)


def max_indicator_circuit(schedule: PoolingSchedule, mode_length: int,
                          targets: Mapping[int, int] | int) -> CircuitSpec:
    """Width-1 (relu, max) circuit computing max_i [x_i hits its target index].

    The same function is realized on any non-overlapping schedule, which is
    what makes deep instances of it replicable by a single shallow channel.
    """
    if schedule.has_overlaps:
        raise ValueError("indicator construction expects a non-overlapping schedule")
    if isinstance(targets, int):
        targets = {i: targets for i in range(1, schedule.spatial_size + 1)}
    conv = []
    position_modes = list(range(1, schedule.spatial_size + 1))
    in_ch = mode_length
    for layer in schedule.layers:
        arrays = []
        for window in layer:
            arr = np.zeros((1, len(window), in_ch))
            for j, pos in enumerate(window):
                if in_ch == mode_length and position_modes is not None:
                    arr[0, j, targets[position_modes[pos - 1]] - 1] = 1.0
                else:
                    arr[0, j, 0] = 1.0
            arrays.append(arr)
        conv.append(tuple(arrays))
        position_modes = None
        in_ch = 1
    return CircuitSpec(mode_length, schedule, (1,) * schedule.num_layers,
                       OperatorSpec("relu", "max"), tuple(conv), np.ones(1))


def rectifier_incompleteness_pair(n: int, mode_length: int,
                                  target: int = 1) -> tuple[CircuitSpec, CircuitSpec]:
    """A deep (relu, max) circuit and the shallow one replicating it exactly.

    Both compute the indicator that at least one input hits the target grid
    index; the grid tensor is a difference of two rank-one tensors, so every
    matricization has rank at most 2 despite the depth of the first circuit.
    """
    deep = max_indicator_circuit(baseline_schedule(n), mode_length, target)
    shallow = max_indicator_circuit(shallow_schedule(n), mode_length, target)
    return deep, shallow


# ---------------------------------------------------------------------------
# Overlap embedding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Token:
    node: ModeTree
    channels: int
    raw: bool  # True while the token is still the untouched representation


def _plan_layer(contents: list[tuple[int, _Token]], length: int,
                parents: dict[int, ModeTree]):
    """One conveyor step: combine adjacent siblings, shift everything left."""
    actions: dict[int, tuple] = {}
    prev = 0
    i = 0
    while i < len(contents):
        q, tok = contents[i]
        if i + 1 < len(contents) and contents[i + 1][0] == q + 1:
            nxt = contents[i + 1][1]
            parent = parents.get(id(tok.node))
            if parent is not None and parent.children == (tok.node, nxt.node):
                actions[q] = ("combine", tok, nxt, parent)
                prev = q
                i += 2
                continue
        if q - 1 > prev:
            target, side = q - 1, "right"
        elif q <= length - 1:
            target, side = q, "left"
        else:
            raise ValueError("conveyor embedding failed; schedule is not supported")
        actions[target] = (side, tok)
        prev = target
        i += 1
    return actions


def embed_nonoverlapping(c: CircuitSpec, max_layers: int | None = None) -> CircuitSpec:
    """Rewrite a size-2-window arithmetic circuit as a stride-1 overlapping one.

    The result uses one extra channel per layer: channel 0 is pinned to the
    constant one (an all-ones mix of the basis representation), which lets a
    window pass a value through unchanged under product pooling. All other
    cross-window mixing weights are zero, so only windows aligned with the
    original pooling pattern contribute; the grid tensors agree exactly.
    """
    if c.op != ARITHMETIC:
        raise ValueError("embedding is defined for the arithmetic operator")
    if c.representation is not None:
        raise ValueError("embedding requires the basis representation")
    if c.is_overlapping:
        raise ValueError("circuit is already overlapping")
    if any(len(w) != 2 for layer in c.schedule.layers for w in layer):
        raise ValueError("embedding expects size-2 pooling windows throughout")

    params = map_to_decomposition(c)
    tree = params.tree
    parents: dict[int, ModeTree] = {}
    for node in tree.internal_nodes_bottom_up():
        for child in node.children:
            parents[id(child)] = node

    m = c.mode_length
    emu_width = 1 + max((m,) + c.widths)
    state: list[tuple[int, _Token]] = [
        (i + 1, _Token(leafnode, m, True))
        for i, leafnode in enumerate(tree.leaves())
    ]
    conv_layers: list[tuple[np.ndarray, ...]] = []
    widths: list[int] = []
    length = len(state)
    limit = max_layers if max_layers is not None else 4 * length

    def const_sel(raw: bool) -> np.ndarray:
        return np.ones(m) if raw else np.eye(emu_width)[0]

    def content_slice(tok: _Token) -> slice:
        return slice(0, m) if tok.raw else slice(1, 1 + tok.channels)

    while length > 1:
        if len(conv_layers) >= limit:
            raise ValueError("conveyor embedding failed to terminate")
        raw_layer = all(tok.raw for _, tok in state)
        in_ch = m if raw_layer else emu_width
        if not raw_layer and any(tok.raw for _, tok in state):
            raise ValueError("mixed raw/emulated layer; schedule is not supported")
        actions = _plan_layer(state, length, parents)
        arrays = []
        new_state: list[tuple[int, _Token]] = []
        for p in range(1, length):
            arr = np.zeros((emu_width, 2, in_ch))
            act = actions.get(p)
            right_raw = left_raw = raw_layer
            arr[0, 0, :] = const_sel(left_raw)
            arr[0, 1, :] = const_sel(right_raw)
            if act is None:
                arrays.append(arr)
                continue
            kind = act[0]
            if kind == "combine":
                ltok, rtok, parent = act[1], act[2], act[3]
                coeff = params.coefficients[parent.modes]
                width = params.widths[parent.modes]
                arr[1:1 + width, 0, content_slice(ltok)] = coeff[0]
                arr[1:1 + width, 1, content_slice(rtok)] = coeff[1]
                new_state.append((p, _Token(parent, width, False)))
            else:
                tok = act[1]
                offset = 0 if kind == "left" else 1
                src = content_slice(tok)
                arr[1:1 + tok.channels, offset, src] = np.eye(tok.channels)
                arr[1:1 + tok.channels, 1 - offset, :] = const_sel(raw_layer)
                new_state.append((p, _Token(tok.node, tok.channels, False)))
            arrays.append(arr)
        conv_layers.append(tuple(arrays))
        widths.append(emu_width)
        state = new_state
        length -= 1

    (_, root_tok) = state[0]
    output = np.zeros(emu_width)
    output[1:1 + root_tok.channels] = params.output_weights
    schedule = stride1_schedule(c.num_positions, 2)
    return CircuitSpec(m, schedule, tuple(widths), ARITHMETIC,
                       tuple(conv_layers), output)

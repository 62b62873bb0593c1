"""Tensor generators: CP, hierarchical (tree-shaped), generalized, and mixed.

All generators build dense tensors bottom-up over a mode tree. Leaves emit
the standard basis vectors as channels; an internal node mixes each child's
channels linearly (one mixing vector per parent channel per child) and takes
the channel-wise product across children; the root's channels are combined
by output weights into the final order-N tensor. Node tensors always carry
their modes sorted ascending.

The generalized variant replaces the product with the activation-pooling
operator g(a, b) = P{sigma(a), sigma(b)}; with (identity, product) it
reproduces the plain generator bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .tensor import ARITHMETIC, DenseTensor, OperatorSpec
from .trees import ModeTree

ModeSet = frozenset[int]


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _sorted_mode_sets(mode_sets) -> list[ModeSet]:
    return sorted(mode_sets, key=lambda s: (min(s), len(s), tuple(sorted(s))))


# ---------------------------------------------------------------------------
# CP
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CpParams:
    """Sum of ``num_terms`` rank-one terms, each the same vector repeated N times."""

    order: int
    vectors: np.ndarray  # (num_terms, mode_length)
    weights: np.ndarray  # (num_terms,)

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if vectors.ndim != 2 or vectors.shape[0] < 1:
            raise ValueError("vectors must be a (num_terms, mode_length) array")
        if weights.shape != (vectors.shape[0],):
            raise ValueError(
                f"weights shape {weights.shape} does not match {vectors.shape[0]} terms"
            )
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "weights", weights)

    @property
    def num_terms(self) -> int:
        return self.vectors.shape[0]

    @property
    def mode_length(self) -> int:
        return self.vectors.shape[1]

    def to_json_dict(self) -> dict:
        return {
            "order": self.order,
            "vectors": self.vectors.tolist(),
            "weights": self.weights.tolist(),
        }


def cp_generate(p: CpParams) -> DenseTensor:
    """Weighted sum of N-fold self outer products of the term vectors."""
    shape = (p.mode_length,) * p.order
    acc = np.zeros(shape)
    for weight, vec in zip(p.weights, p.vectors):
        term = vec
        for _ in range(p.order - 1):
            term = term[..., None] * vec
        acc += weight * term
    return DenseTensor(acc)


def sample_cp_params(order: int, mode_length: int, num_terms: int, seed) -> CpParams:
    rng = _as_rng(seed)
    return CpParams(
        order=order,
        vectors=rng.standard_normal((num_terms, mode_length)),
        weights=rng.standard_normal(num_terms),
    )


# ---------------------------------------------------------------------------
# Hierarchical
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HierarchicalParams:
    """Parameters of a tree-shaped generator.

    ``widths`` maps every internal node (keyed by its mode set) to its channel
    count; leaves implicitly emit ``mode_length`` basis channels.
    ``coefficients`` holds, per internal node, one array per child of shape
    (node width, child emission). ``output_weights`` mixes the root channels
    into the single generated tensor.

    ``exchanged_child_widths`` is only used when the parameters are one side
    of a mixture: it declares, per exchanged child node, the width of the
    shared channel pool the parent draws from instead of the child's own
    emission. Such parameters cannot be generated standalone.
    """

    tree: ModeTree
    mode_length: int
    widths: Mapping[ModeSet, int]
    coefficients: Mapping[ModeSet, tuple[np.ndarray, ...]]
    output_weights: np.ndarray
    exchanged_child_widths: Mapping[ModeSet, int] = field(default_factory=dict)

    def __post_init__(self):
        self.tree.validate_complete()
        if self.mode_length < 1:
            raise ValueError("mode_length must be >= 1")
        coeffs = {k: tuple(np.asarray(a, dtype=np.float64) for a in v)
                  for k, v in self.coefficients.items()}
        object.__setattr__(self, "coefficients", coeffs)
        out = np.asarray(self.output_weights, dtype=np.float64)
        object.__setattr__(self, "output_weights", out)
        for node in self.tree.internal_nodes_bottom_up():
            key = node.modes
            if key not in self.widths or self.widths[key] < 1:
                raise ValueError(f"missing or invalid width for node {sorted(key)}")
            if key not in coeffs or len(coeffs[key]) != len(node.children):
                raise ValueError(f"need one coefficient array per child at {sorted(key)}")
            for child, arr in zip(node.children, coeffs[key]):
                expected = (self.widths[key], self.child_emission(child))
                if arr.shape != expected:
                    raise ValueError(
                        f"coefficients at {sorted(key)} for child {sorted(child.modes)}: "
                        f"shape {arr.shape}, expected {expected}"
                    )
        root_width = self.widths[self.tree.modes]
        if out.shape != (root_width,):
            raise ValueError(
                f"output weights shape {out.shape} does not match root width {root_width}"
            )

    @property
    def order(self) -> int:
        return self.tree.order

    def child_emission(self, child: ModeTree) -> int:
        """Channel count the parent mixes for this child."""
        if child.modes in self.exchanged_child_widths:
            return self.exchanged_child_widths[child.modes]
        return self.mode_length if child.is_leaf else self.widths[child.modes]

    def to_json_dict(self, seed=None) -> dict:
        keyed = lambda m: ",".join(map(str, sorted(m)))
        obj = {
            "tree": self.tree.to_json_dict(),
            "mode_length": self.mode_length,
            "widths": {keyed(k): v for k, v in self.widths.items()},
            "coefficients": {
                keyed(k): [a.tolist() for a in v] for k, v in self.coefficients.items()
            },
            "output_weights": self.output_weights.tolist(),
        }
        if seed is not None:
            obj["seed"] = seed
        return obj

    @classmethod
    def from_json_dict(cls, obj: dict) -> "HierarchicalParams":
        unkey = lambda s: frozenset(int(x) for x in s.split(","))
        return cls(
            tree=ModeTree.from_json_dict(obj["tree"]),
            mode_length=obj["mode_length"],
            widths={unkey(k): v for k, v in obj["widths"].items()},
            coefficients={unkey(k): tuple(np.asarray(a) for a in v)
                          for k, v in obj["coefficients"].items()},
            output_weights=np.asarray(obj["output_weights"]),
        )


def uniform_widths(tree: ModeTree, width: int) -> dict[ModeSet, int]:
    return {node.modes: width for node in tree.internal_nodes_bottom_up()}


def _combine_mixed(mixed: Sequence[np.ndarray], op: OperatorSpec | None) -> np.ndarray:
    """Fold per-child (width, flat) arrays into (width, prod of flats).

    ``op`` None is the plain arithmetic path: raw channel-wise products.
    Otherwise activations are applied per child and the pooling folds across
    children (mean over all children for average pooling).
    """
    width = mixed[0].shape[0]
    if op is None:
        acc = mixed[0]
        for m in mixed[1:]:
            acc = (acc[:, :, None] * m[:, None, :]).reshape(width, -1)
        return acc
    acc = op.activate(mixed[0])
    for m in mixed[1:]:
        m = op.activate(m)
        a, b = acc[:, :, None], m[:, None, :]
        if op.pooling == "product":
            acc = (a * b).reshape(width, -1)
        elif op.pooling == "max":
            acc = np.maximum(a, b).reshape(width, -1)
        else:
            acc = (a + b).reshape(width, -1)
    if op.pooling == "average":
        acc = acc / len(mixed)
    return acc


def _generate_node(node: ModeTree, params: HierarchicalParams,
                   op: OperatorSpec | None,
                   child_override=None) -> tuple[np.ndarray, tuple[int, ...]]:
    """Channels at a node: array (width, M, ..., M) with modes sorted ascending."""
    m = params.mode_length
    if node.is_leaf:
        return np.eye(m), (node.leaf_mode,)
    mixed, orders = [], []
    for child, coeff in zip(node.children, params.coefficients[node.modes]):
        if child_override is not None:
            sub, sub_modes = child_override(child)
        else:
            sub, sub_modes = _generate_node(child, params, op)
        mixed.append(np.tensordot(coeff, sub.reshape(sub.shape[0], -1), axes=([1], [0])))
        orders.append(sub_modes)
    width = params.widths[node.modes]
    flat = _combine_mixed(mixed, op)
    concat = tuple(mode for sub_modes in orders for mode in sub_modes)
    tensor = flat.reshape((width,) + (m,) * len(concat))
    perm = (0,) + tuple(1 + i for i in np.argsort(concat))
    return np.ascontiguousarray(np.transpose(tensor, perm)), tuple(sorted(concat))


def _finalize(params: HierarchicalParams, op: OperatorSpec | None) -> DenseTensor:
    if params.exchanged_child_widths:
        raise ValueError(
            "parameters reference a mixture exchange pool; generate via mixed_generate"
        )
    channels, _ = _generate_node(params.tree, params, op)
    flat = np.tensordot(params.output_weights, channels.reshape(channels.shape[0], -1),
                        axes=([0], [0]))
    return DenseTensor(flat.reshape((params.mode_length,) * params.order))


def hierarchical_generate(params: HierarchicalParams) -> DenseTensor:
    """Generate the order-N tensor of a tree-shaped arithmetic generator."""
    return _finalize(params, None)


def generalized_generate(params: HierarchicalParams, op: OperatorSpec) -> DenseTensor:
    """Same construction with the product replaced by the activation-pooling operator."""
    return _finalize(params, op)


def sample_hierarchical_params(tree: ModeTree, mode_length: int, widths, seed,
                               exchanged_child_widths=None) -> HierarchicalParams:
    """Draw all coefficients i.i.d. standard normal from a seeded generator.

    ``widths`` is either a single channel count for every internal node or an
    explicit node-to-width mapping. The draw order is fixed (post-order over
    internal nodes, children left to right, output weights last), so a seed
    pins the parameters exactly.
    """
    rng = _as_rng(seed)
    if isinstance(widths, int):
        widths = uniform_widths(tree, widths)
    missing = [node.modes for node in tree.internal_nodes_bottom_up()
               if node.modes not in widths]
    if missing:
        raise ValueError(f"missing width for node {sorted(missing[0])}")
    exchanged = dict(exchanged_child_widths or {})

    def emission(child: ModeTree) -> int:
        if child.modes in exchanged:
            return exchanged[child.modes]
        return mode_length if child.is_leaf else widths[child.modes]

    coefficients = {}
    for node in tree.internal_nodes_bottom_up():
        coefficients[node.modes] = tuple(
            rng.standard_normal((widths[node.modes], emission(child)))
            for child in node.children
        )
    output = rng.standard_normal(widths[tree.modes])
    return HierarchicalParams(tree, mode_length, widths, coefficients, output,
                              exchanged_child_widths=exchanged)


def one_hot_selector_params(tree: ModeTree, mode_length: int,
                            targets: Mapping[int, int] | int) -> HierarchicalParams:
    """Width-1 parameters whose leaf mixes are one-hot grid-index selectors.

    Under the arithmetic operator the generated tensor is the indicator of
    the single grid point hitting every target; under (relu, max) it is the
    pointwise maximum of the per-position indicators, i.e. 1 wherever at
    least one position hits its target. Such max-generated tensors stay at
    matricization rank <= 2 regardless of tree depth.
    """
    if isinstance(targets, int):
        targets = {leaf.leaf_mode: targets for leaf in tree.leaves()}
    widths = uniform_widths(tree, 1)
    coefficients = {}
    for node in tree.internal_nodes_bottom_up():
        arrays = []
        for child in node.children:
            if child.is_leaf:
                sel = np.zeros((1, mode_length))
                sel[0, targets[child.leaf_mode] - 1] = 1.0
                arrays.append(sel)
            else:
                arrays.append(np.ones((1, 1)))
        coefficients[node.modes] = tuple(arrays)
    return HierarchicalParams(tree, mode_length, widths, coefficients, np.ones(1))


# ---------------------------------------------------------------------------
# Mixed
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MixedParams:
    """Two tree generators run in parallel with channel exchange.

    ``exchanges`` maps a mode subset present as a node in both trees to a
    mixing matrix of shape (shared width, left emission + right emission).
    At such a node both sides' channels are concatenated and mixed into the
    shared pool, which both parents consume. The final tensor is the sum of
    both sides' outputs.
    """

    left: HierarchicalParams
    right: HierarchicalParams
    exchanges: Mapping[ModeSet, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        exchanges = {k: np.asarray(v, dtype=np.float64) for k, v in self.exchanges.items()}
        object.__setattr__(self, "exchanges", exchanges)
        if self.left.order != self.right.order:
            raise ValueError("both sides must cover the same number of modes")
        if self.left.mode_length != self.right.mode_length:
            raise ValueError("both sides must share the mode length")
        root = self.left.tree.modes
        for modes, mat in exchanges.items():
            if modes == root:
                raise ValueError("the root is merged additively, not exchanged")
            ln = self.left.tree.node_by_modes(modes)
            rn = self.right.tree.node_by_modes(modes)
            if ln is None or rn is None:
                raise ValueError(f"exchange node {sorted(modes)} absent from a tree")
            cols = self._own_emission(self.left, ln) + self._own_emission(self.right, rn)
            if mat.ndim != 2 or mat.shape[1] != cols:
                raise ValueError(
                    f"exchange at {sorted(modes)}: matrix shape {mat.shape}, "
                    f"expected (shared, {cols})"
                )
        for side in (self.left, self.right):
            declared = dict(side.exchanged_child_widths)
            expected = {m: e.shape[0] for m, e in exchanges.items()}
            if declared != expected:
                raise ValueError(
                    "each side's exchanged_child_widths must match the exchange pools"
                )

    @staticmethod
    def _own_emission(side: HierarchicalParams, node: ModeTree) -> int:
        return side.mode_length if node.is_leaf else side.widths[node.modes]

    @property
    def order(self) -> int:
        return self.left.order


def mixed_generate(p: MixedParams) -> DenseTensor:
    """Run both trees bottom-up, sharing exchanged pools, and add the roots."""
    m = p.left.mode_length
    shared_memo: dict[ModeSet, tuple[np.ndarray, tuple[int, ...]]] = {}

    def shared(modes: ModeSet) -> tuple[np.ndarray, tuple[int, ...]]:
        if modes not in shared_memo:
            tl, ml = side_tensor(p.left, p.left.tree.node_by_modes(modes))
            tr, mr = side_tensor(p.right, p.right.tree.node_by_modes(modes))
            assert ml == mr
            pool = np.concatenate([tl.reshape(tl.shape[0], -1),
                                   tr.reshape(tr.shape[0], -1)])
            mixed = p.exchanges[modes] @ pool
            shared_memo[modes] = (mixed.reshape((-1,) + tl.shape[1:]), ml)
        return shared_memo[modes]

    def side_tensor(side: HierarchicalParams, node: ModeTree):
        def override(child: ModeTree):
            if child.modes in p.exchanges:
                return shared(child.modes)
            return side_tensor(side, child)

        if node.is_leaf:
            return np.eye(m), (node.leaf_mode,)
        return _generate_node(node, side, None, child_override=override)

    total = None
    for side in (p.left, p.right):
        channels, _ = side_tensor(side, side.tree)
        flat = np.tensordot(side.output_weights,
                            channels.reshape(channels.shape[0], -1), axes=([0], [0]))
        total = flat if total is None else total + flat
    return DenseTensor(total.reshape((m,) * p.order))


def common_exchange_modes(t1: ModeTree, t2: ModeTree,
                          include_leaves: bool = True) -> list[ModeSet]:
    """Mode subsets present as nodes in both trees, excluding the root."""
    common = (t1.all_mode_sets() & t2.all_mode_sets()) - {t1.modes}
    if not include_leaves:
        common = {s for s in common if len(s) > 1}
    return _sorted_mode_sets(common)


def sample_mixed_params(t1: ModeTree, t2: ModeTree, mode_length: int, widths,
                        seed, exchange_modes=None) -> MixedParams:
    """Seeded standard-normal mixture parameters.

    By default the exchange set is every non-root node common to both trees,
    with shared pools sized by concatenation (left emission + right
    emission).
    """
    rng = _as_rng(seed)
    if exchange_modes is None:
        exchange_modes = common_exchange_modes(t1, t2)
    exchange_modes = _sorted_mode_sets(frozenset(s) for s in exchange_modes)

    def emissions(tree, wmap):
        out = {}
        for modes in exchange_modes:
            node = tree.node_by_modes(modes)
            if node is None:
                raise ValueError(f"exchange node {sorted(modes)} absent from a tree")
            out[modes] = mode_length if node.is_leaf else wmap[modes]
        return out

    w1 = uniform_widths(t1, widths) if isinstance(widths, int) else dict(widths[0])
    w2 = uniform_widths(t2, widths) if isinstance(widths, int) else dict(widths[1])
    em1, em2 = emissions(t1, w1), emissions(t2, w2)
    pool_widths = {m: em1[m] + em2[m] for m in exchange_modes}

    left = sample_hierarchical_params(t1, mode_length, w1, rng,
                                      exchanged_child_widths=pool_widths)
    right = sample_hierarchical_params(t2, mode_length, w2, rng,
                                       exchanged_child_widths=pool_widths)
    exchanges = {m: rng.standard_normal((pool_widths[m], em1[m] + em2[m]))
                 for m in exchange_modes}
    return MixedParams(left, right, exchanges)

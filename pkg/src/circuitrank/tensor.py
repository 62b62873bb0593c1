"""Dense tensors, mode partitions, matricization, and numerical rank.

Every other part of the library exchanges values through the types defined
here: an order-N dense tensor of 64-bit floats, a two-way partition of its
modes, and an activation/pooling operator pair that generalizes the plain
outer product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_RANK_TOL = 1e-9
DEFAULT_CLOSE_TOL = 1e-10

ACTIVATIONS = ("identity", "relu")
POOLINGS = ("product", "max", "average")


class MemoryGuardError(RuntimeError):
    """Raised when a requested dense tensor would exceed the entry budget."""


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """Order-N array of real scalars, row-major, all entries finite."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim < 1:
            raise ValueError("tensor order must be at least 1")
        if any(n < 1 for n in arr.shape):
            raise ValueError(f"every mode length must be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def order(self) -> int:
        return self.data.ndim

    @property
    def mode_lengths(self) -> tuple[int, ...]:
        return self.data.shape

    @classmethod
    def from_entries(cls, mode_lengths: Sequence[int], entries: Sequence[float]) -> "DenseTensor":
        arr = np.asarray(entries, dtype=np.float64)
        expected = int(np.prod(mode_lengths))
        if arr.size != expected:
            raise ValueError(
                f"entry count {arr.size} does not match mode lengths {tuple(mode_lengths)}"
            )
        return cls(arr.reshape(tuple(mode_lengths)))

    def to_json_dict(self) -> dict:
        return {
            "order": self.order,
            "mode_lengths": list(self.mode_lengths),
            "entries": self.data.ravel().tolist(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DenseTensor":
        t = cls.from_entries(obj["mode_lengths"], obj["entries"])
        if t.order != obj["order"]:
            raise ValueError("order field inconsistent with mode_lengths")
        return t


@dataclass(frozen=True)
class Partition:
    """Two-way split (left, right) of the 1-based mode indices 1..total_modes."""

    total_modes: int
    left: tuple[int, ...]
    right: tuple[int, ...]

    def __post_init__(self):
        left = tuple(sorted(self.left))
        right = tuple(sorted(self.right))
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        if not left or not right:
            raise ValueError("both sides of a partition must be nonempty")
        if len(set(left)) != len(left) or len(set(right)) != len(right):
            raise ValueError("partition sides must not repeat modes")
        if set(left) & set(right):
            raise ValueError("partition sides must be disjoint")
        if set(left) | set(right) != set(range(1, self.total_modes + 1)):
            raise ValueError(
                f"partition must cover modes 1..{self.total_modes}, "
                f"got {left} | {right}"
            )

    @classmethod
    def from_left(cls, total_modes: int, left: Iterable[int]) -> "Partition":
        left = tuple(sorted(set(left)))
        right = tuple(i for i in range(1, total_modes + 1) if i not in left)
        return cls(total_modes, left, right)

    def swapped(self) -> "Partition":
        return Partition(self.total_modes, self.right, self.left)

    def label(self) -> str:
        return "{" + ",".join(map(str, self.left)) + "}|{" + ",".join(map(str, self.right)) + "}"


@dataclass(frozen=True)
class OperatorSpec:
    """Activation/pooling pair; (identity, product) is the arithmetic case."""

    activation: str = "identity"
    pooling: str = "product"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {self.pooling!r}")

    @property
    def is_arithmetic(self) -> bool:
        return self.activation == "identity" and self.pooling == "product"

    def activate(self, values: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return np.maximum(values, 0.0)
        return values

    def pool(self, activated: Sequence[np.ndarray]) -> np.ndarray:
        """Combine already-activated window values.

        Product and max fold pairwise; average is the mean of all window
        values, not an iterated pairwise mean.
        """
        acc = activated[0]
        if self.pooling == "product":
            for v in activated[1:]:
                acc = acc * v
            return acc
        if self.pooling == "max":
            for v in activated[1:]:
                acc = np.maximum(acc, v)
            return acc
        acc = acc.copy() if len(activated) > 1 else acc
        for v in activated[1:]:
            acc = acc + v
        return acc / len(activated)


ARITHMETIC = OperatorSpec("identity", "product")


def outer_product(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    """Outer product: result[(i..), (j..)] = a[i..] * b[j..]."""
    sa = a.data.reshape(a.data.shape + (1,) * b.order)
    return DenseTensor(sa * b.data)


def generalized_outer_product(a: DenseTensor, b: DenseTensor, op: OperatorSpec) -> DenseTensor:
    """Outer product with entrywise multiplication replaced by g(a,b) = P{sigma(a), sigma(b)}.

    With op (identity, product) this coincides with ``outer_product`` exactly.
    """
    sa = op.activate(a.data).reshape(a.data.shape + (1,) * b.order)
    sb = op.activate(b.data)
    return DenseTensor(op.pool([np.broadcast_to(sa, a.data.shape + b.data.shape), sb]))


def matricize(t: DenseTensor, p: Partition) -> np.ndarray:
    """Arrange a tensor as a matrix: rows indexed by the left modes, columns by the right.

    Modes inside each side are taken ascending, row-major (last mode fastest),
    matching a permute-then-reshape of the underlying array.
    """
    if p.total_modes != t.order:
        raise ValueError(
            f"partition over {p.total_modes} modes does not match tensor order {t.order}"
        )
    perm = tuple(i - 1 for i in p.left + p.right)
    rows = int(np.prod([t.mode_lengths[i - 1] for i in p.left]))
    cols = int(np.prod([t.mode_lengths[i - 1] for i in p.right]))
    return np.transpose(t.data, perm).reshape(rows, cols)


def numerical_rank(matrix: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Count singular values above rel_tol * s_max * max(rows, cols).

    The zero matrix has rank 0. Raises on non-finite entries.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("numerical_rank expects a matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0] * max(m.shape)))


def tensors_close(a: DenseTensor, b: DenseTensor, rel_tol: float = DEFAULT_CLOSE_TOL) -> bool:
    """True iff max |a - b| <= rel_tol * (1 + max |a|).

    The normalization uses the first operand, so the test is symmetric only
    up to that choice.
    """
    if a.mode_lengths != b.mode_lengths:
        raise ValueError(f"shape mismatch: {a.mode_lengths} vs {b.mode_lengths}")
    diff = np.max(np.abs(a.data - b.data))
    return bool(diff <= rel_tol * (1.0 + np.max(np.abs(a.data))))

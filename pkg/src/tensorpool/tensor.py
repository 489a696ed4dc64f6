"""Dense cubic tensors of low order with contraction and unfolding support.

Everything in this module operates on order-``r`` tensors whose modes all
share one dimension ``d``, stored flat in row-major order (last index
fastest).  Values are immutable after construction, so all operations are
pure functions that are safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .errors import CapacityError, InvalidArgumentError

# Desk-scale size bounds: large enough for meaningful experiments, small
# enough that brute-force oracles run in seconds.
CAPACITY = {1: 128, 2: 128, 3: 24, 4: 16}
MAX_ORDER = 4


def check_capacity(dim: int, order: int) -> None:
    """Reject (dim, order) combinations outside the supported envelope."""
    if order > MAX_ORDER:
        raise CapacityError(f"order {order} exceeds the supported maximum {MAX_ORDER}")
    limit = CAPACITY[order]
    if dim > limit:
        raise CapacityError(f"dim {dim} exceeds the order-{order} limit {limit}")


class DenseTensor:
    """Immutable order-``r`` cubic tensor over dimension ``d``.

    Coefficients live in a flat float64 buffer of length ``d**r`` in
    row-major layout: index ``(i1, ..., ir)`` maps to ``sum(i_j * d**(r-j))``.
    """

    __slots__ = ("order", "dim", "data")

    def __init__(self, order: int, dim: int, data):
        if order < 1:
            raise InvalidArgumentError("tensor order must be >= 1")
        if dim < 1:
            raise InvalidArgumentError("tensor dim must be >= 1")
        flat = np.ascontiguousarray(data, dtype=np.float64).reshape(-1)
        if flat.size != dim**order:
            raise InvalidArgumentError(
                f"data length {flat.size} != dim**order = {dim**order}"
            )
        if not np.all(np.isfinite(flat)):
            raise InvalidArgumentError("tensor coefficients must be finite")
        flat = flat.copy()
        flat.flags.writeable = False
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "data", flat)

    def __setattr__(self, name, value):
        raise AttributeError("DenseTensor is immutable")

    @classmethod
    def _from_owned(cls, order: int, dim: int, flat: np.ndarray) -> "DenseTensor":
        """Wrap a freshly computed, contiguous float64 buffer without copying.

        Internal fast path for operations that own their result arrays; the
        finiteness invariant is still enforced.  The tripwire is the squared
        norm: any NaN or infinity makes it non-finite (the terms are
        non-negative, so nothing can cancel), and the exact scan runs only
        when it fires, so a merely overflowing squared norm cannot cause a
        false rejection.
        """
        obj = object.__new__(cls)
        flat = flat.reshape(-1)
        if not math.isfinite(flat.dot(flat)) and not np.all(np.isfinite(flat)):
            raise InvalidArgumentError("tensor coefficients must be finite")
        flat.flags.writeable = False
        object.__setattr__(obj, "order", order)
        object.__setattr__(obj, "dim", dim)
        object.__setattr__(obj, "data", flat)
        return obj

    @property
    def array(self) -> np.ndarray:
        """Read-only view shaped ``(d,) * r``."""
        return self.data.reshape((self.dim,) * self.order)

    def __getitem__(self, idx):
        return self.array[idx]

    def __eq__(self, other):
        return (
            isinstance(other, DenseTensor)
            and self.order == other.order
            and self.dim == other.dim
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return f"DenseTensor(order={self.order}, dim={self.dim})"


@dataclass(frozen=True)
class SuperDiagonal:
    """The ``d`` entries ``T[i, i, ..., i]`` of a cubic tensor."""

    dim: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.dim,):
            raise InvalidArgumentError("super-diagonal length must equal dim")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class Unfolding:
    """Matrix view of a tensor grouping the first ``lead`` modes as rows.

    ``matrix`` has shape ``(d**lead, d**(r - lead))`` and shares no mutable
    state with callers; ``refold`` reverses the reshape bit-exactly.
    """

    order: int
    dim: int
    lead: int
    matrix: np.ndarray

    @property
    def rows(self) -> int:
        return self.dim**self.lead

    @property
    def cols(self) -> int:
        return self.dim ** (self.order - self.lead)

    def refold(self) -> DenseTensor:
        return DenseTensor(self.order, self.dim, self.matrix.reshape(-1))


def outer_power(x, r: int) -> DenseTensor:
    """Build the order-``r`` tensor with entries ``x[i1] * ... * x[ir]``.

    The result is super-symmetric bit-exactly: each entry multiplies the
    coefficients in sorted index order, so permuted index tuples share one
    rounding path.
    """
    vec = np.asarray(x, dtype=np.float64).reshape(-1)
    if r < 1:
        raise InvalidArgumentError("outer_power requires order r >= 1")
    if vec.size == 0:
        raise InvalidArgumentError("outer_power requires a non-empty vector")
    d = vec.size
    check_capacity(d, r)
    if r == 1:
        return DenseTensor(1, d, vec)
    indices = np.sort(np.indices((d,) * r).reshape(r, -1), axis=0)
    out = vec[indices[0]]
    for mode in range(1, r):
        out = out * vec[indices[mode]]
    return DenseTensor(r, d, out)


def identity_tensor(d: int, r: int) -> DenseTensor:
    """Tensor with ones exactly where all ``r`` indices coincide."""
    if d < 1:
        raise InvalidArgumentError("identity_tensor requires d >= 1")
    if r < 2:
        raise InvalidArgumentError("identity_tensor requires order r >= 2")
    check_capacity(d, r)
    arr = np.zeros((d,) * r)
    arr[(np.arange(d),) * r] = 1.0
    return DenseTensor(r, d, arr)


def contract(a: DenseTensor, b: DenseTensor, k: int) -> DenseTensor:
    """Contract the last ``k`` modes of ``a`` with the first ``k`` of ``b``.

    The result has order ``a.order + b.order - 2k``.  For matrices with
    ``k = 1`` this is the ordinary matrix product; pairing trailing modes of
    the left operand with leading modes of the right operand is the one
    convention under which repeated contraction of an even-order tensor
    matches matrix powers of its half unfolding.
    """
    if a.dim != b.dim:
        raise InvalidArgumentError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if k < 1 or k > a.order or k > b.order:
        raise InvalidArgumentError(
            f"mode count k={k} must satisfy 1 <= k <= min(order_a, order_b)"
        )
    out_order = a.order + b.order - 2 * k
    if out_order < 1:
        raise InvalidArgumentError(
            "full contraction yields a scalar; use tensor_inner instead"
        )
    result = np.tensordot(a.array, b.array, axes=k)
    return DenseTensor(out_order, a.dim, result)


def tensor_inner(a: DenseTensor, b: DenseTensor) -> float:
    """Full inner product: sum of elementwise products of all coefficients."""
    if a.order != b.order or a.dim != b.dim:
        raise InvalidArgumentError("tensor_inner requires identical shapes")
    return float(np.dot(a.data, b.data))


def super_diagonal(t: DenseTensor) -> SuperDiagonal:
    """Extract ``values[i] = t[i, i, ..., i]``."""
    idx = (np.arange(t.dim),) * t.order
    return SuperDiagonal(t.dim, t.array[idx])


def unfold(t: DenseTensor, lead: int) -> Unfolding:
    """Lossless reshape grouping the first ``lead`` modes as matrix rows."""
    if lead < 1 or lead >= t.order:
        raise InvalidArgumentError(
            f"lead mode count {lead} must satisfy 1 <= lead < order ({t.order})"
        )
    rows = t.dim**lead
    cols = t.dim ** (t.order - lead)
    return Unfolding(t.order, t.dim, lead, t.data.reshape(rows, cols))


def symmetrize(t: DenseTensor) -> DenseTensor:
    """Average over all index permutations of ``t``."""
    arr = t.array
    acc = np.zeros_like(arr)
    perms = list(permutations(range(t.order)))
    for p in perms:
        acc += arr.transpose(p)
    return DenseTensor(t.order, t.dim, acc / len(perms))


def asymmetry(t: DenseTensor) -> float:
    """Largest absolute deviation of ``t`` from its symmetrization."""
    return float(np.max(np.abs(t.array - symmetrize(t).array)))

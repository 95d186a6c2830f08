"""Tensor, precision modes and the reverse-mode gradient tape."""
from __future__ import annotations

import logging
from enum import Enum
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import ContractError, PrecisionError

logger = logging.getLogger("sfnet.tensor")

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Precision(str, Enum):
    STANDARD = "standard"
    VERIFICATION = "verification"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32) if self is Precision.STANDARD else np.dtype(np.float64)

    @property
    def sentinel(self) -> float:
        """Most-negative finite scalar; stands in for -inf in masked scores."""
        return float(np.finfo(self.dtype).min)

    @classmethod
    def of(cls, dtype: Any) -> "Precision":
        dt = np.dtype(dtype)
        if dt == np.float64:
            return cls.VERIFICATION
        if dt == np.float32:
            return cls.STANDARD
        raise PrecisionError(f"unsupported scalar type {dt}")


class Tensor:
    """Dense row-major array with optional gradient tracking.

    Data is read-only once constructed; only ``grad`` accumulates and
    ``assign`` swaps the payload of a leaf between optimizer steps.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        precision: Precision | str | None = None,
    ):
        arr = np.asarray(data)
        if precision is None:
            precision = Precision.of(arr.dtype) if arr.dtype in (np.float32, np.float64) else Precision.STANDARD
        precision = Precision(precision)
        arr = np.array(arr, dtype=precision.dtype, order="C", copy=True)
        arr.flags.writeable = False
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def make_result(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
        op: str,
    ) -> "Tensor":
        """Wrap an op output; the tape entry is kept only when a parent tracks gradients."""
        precision = check_precision(*parents)
        out = cls.__new__(cls)
        arr = np.ascontiguousarray(data, dtype=precision.dtype)
        arr.flags.writeable = False
        out.data = arr
        out.grad = None
        out.op = op
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def precision(self) -> Precision:
        return Precision.of(self.data.dtype)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def assign(self, data: np.ndarray) -> None:
        if not self.is_leaf:
            raise ContractError(f"cannot assign to non-leaf tensor produced by '{self.op}'")
        arr = np.array(data, dtype=self.data.dtype, order="C", copy=True)
        if arr.shape != self.data.shape:
            raise ContractError(f"assign shape {arr.shape} != {self.data.shape}")
        arr.flags.writeable = False
        self.data = arr

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate ``grad`` on every reachable leaf that requires it."""
        if self.data.size != 1 or self.data.ndim > 1:
            raise ContractError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("backward called on a tensor that does not require grad")

        order = _topological_order(self)
        logger.debug("tensor.backward nodes=%d", len(order))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=parent.data.dtype)
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, precision={self.precision.value}, op={self.op}{flag})"

    def __add__(self, other: Any) -> "Tensor":
        from .ops import add
        return add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        from .ops import add
        return add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        from .ops import sub
        return sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from .ops import sub
        return sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from .ops import mul
        return mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        from .ops import mul
        return mul(other, self)

    def __neg__(self) -> "Tensor":
        from .ops import scale
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from .ops import matmul
        return matmul(self, other)


def _topological_order(root: Tensor) -> list[Tensor]:
    # Iterative post-order DFS; deep graphs would overflow the recursion limit.
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def check_precision(*tensors: Tensor) -> Precision:
    if not tensors:
        raise ContractError("op needs at least one tensor operand")
    dtype = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dtype:
            raise PrecisionError(
                f"mixed precision in one graph: {Precision.of(dtype).value} and {t.precision.value}"
            )
    return Precision.of(dtype)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()

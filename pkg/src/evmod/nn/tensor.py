"""Dense float tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array and remembers, when gradients are
enabled, which tensors it was computed from and how to push a gradient back
to them. Calling :meth:`Tensor.backward` on a scalar walks the recorded
graph once in reverse topological order.

Everything is deterministic: a fixed graph evaluated twice produces
bit-identical forward values and gradients (accumulation order is fixed by
construction order).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import NonFiniteGradient

_grad_enabled = True

# Switched on by grad_check; off in training loops where the loss guard
# already catches blow-ups and the per-node isfinite scan would cost time.
check_finite_gradients = False


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / numeric probes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A numpy array plus optional autograd bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
    ):
        if not isinstance(data, np.ndarray):
            if isinstance(data, np.generic):
                # numpy scalar (ufuncs return these for 0-d inputs): keep dtype
                data = np.asarray(data)
            else:
                data = np.asarray(data, dtype=np.float32)
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name
        if requires_grad:
            self.zero_grad()

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def from_op(
        data: np.ndarray,
        parents: Iterable["Tensor"],
        vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]],
    ) -> "Tensor":
        """Result of an operator. Records the edge only when grad is enabled
        and at least one parent participates in differentiation."""
        parents = tuple(parents)
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._vjp = vjp
        return out

    # -- array-like conveniences ----------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # -- gradient machinery ---------------------------------------------------

    def zero_grad(self) -> None:
        if (
            self.grad is None
            or self.grad.shape != self.data.shape
            or self.grad.dtype != self.data.dtype
        ):
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Reverse-mode sweep from this tensor.

        ``grad`` defaults to 1.0 and therefore requires a scalar output.
        Gradients accumulate into ``.grad`` of every reachable tensor that
        owns a gradient buffer (leaves / parameters).
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)

        # Iterative depth-first topological order over the requires_grad slice
        # of the graph.
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))

        pending: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if check_finite_gradients and not np.isfinite(g).all():
                raise NonFiniteGradient(f"non-finite gradient flowing into {node!r}")
            if node.grad is not None:
                node.grad += g
            if node._vjp is None:
                continue
            for p, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not p.requires_grad:
                    continue
                if not isinstance(pg, np.ndarray):
                    pg = np.asarray(pg)  # 0-d ufunc results come back as scalars
                acc = pending.get(id(p))
                if acc is None:
                    # Own the buffer: vjps may hand back `g` itself or a view.
                    if pg is g or pg.base is not None:
                        pg = pg.copy()
                    pending[id(p)] = pg
                else:
                    acc += pg

    # -- operator sugar (thin wrappers over functional ops) --------------------

    def __add__(self, other):
        from . import functional as F

        return F.add(self, _wrap(other, self.dtype))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        from . import functional as F

        return F.sub(self, _wrap(other, self.dtype))

    def __rsub__(self, other):
        from . import functional as F

        return F.sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        from . import functional as F

        return F.mul(self, _wrap(other, self.dtype))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        from . import functional as F

        return F.scale(self, -1.0)


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


class Parameter(Tensor):
    """A trainable leaf tensor. Gradients are zeroed between optimizer steps."""

    __slots__ = ()

    def __init__(self, data: np.ndarray, name: str | None = None):
        super().__init__(np.ascontiguousarray(data), requires_grad=True, name=name)

"""Dense float64 tensors with reverse-mode differentiation.

Every op whose inputs require gradients attaches a :class:`Node` to its
output. :func:`backward` collects the nodes reachable from a scalar loss into
a :class:`Tape` in topological order and replays it in reverse. A tape is
consumed by the replay; a second ``backward`` on the same graph raises.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from ..exceptions import ShapeError, TapeError


class Node:
    __slots__ = ("op", "parents", "backward_fn", "consumed")

    def __init__(self, op: str, parents: tuple, backward_fn: Callable):
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn
        self.consumed = False


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None
        self.name = name

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    # Operator sugar; the ops module holds the definitions.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Wrap an op result, recording a node when any parent is tracked."""
    track = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out.node = Node(op, tuple(parents), backward_fn)
    return out


class Tape:
    """Nodes reachable from one output, in topological (creation) order."""

    def __init__(self, output: Tensor):
        self.output = output
        self.tensors: list = []
        seen = set()
        stack = [(output, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                self.tensors.append(t)
                continue
            if id(t) in seen or t.node is None:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for p in t.node.parents:
                if p.node is not None and id(p) not in seen:
                    stack.append((p, False))

    def __len__(self):
        return len(self.tensors)

    def run(self, seed_grad: np.ndarray) -> None:
        for t in self.tensors:
            if t.node.consumed:
                raise TapeError(f"graph already differentiated (op {t.node.op!r}); run the forward pass again")
        grads = {id(self.output): seed_grad}
        for t in reversed(self.tensors):
            g = grads.pop(id(t), None)
            node = t.node
            if g is None:
                node.consumed = True
                continue
            parent_grads = node.backward_fn(g)
            for p, pg in zip(node.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if pg.shape != p.shape:
                    raise ShapeError(f"{node.op}: gradient shape {pg.shape} != input shape {p.shape}")
                if p.node is None:
                    p.grad = pg.copy() if p.grad is None else p.grad + pg
                else:
                    prev = grads.get(id(p))
                    grads[id(p)] = pg if prev is None else prev + pg
            node.consumed = True
            node.backward_fn = None


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tracked leaf that ``loss`` depends on."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.node is None:
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
            return
        raise TapeError("loss does not depend on any tensor that requires grad")
    if loss.node.consumed:
        raise TapeError("graph already differentiated; run the forward pass again")
    Tape(loss).run(np.ones_like(loss.data))

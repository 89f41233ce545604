"""
Reverse-mode differentiation tape over float64 arrays.

Only the operations the discrete objective needs are provided. Nodes are
appended in evaluation order, so the node list is already topologically
sorted; ``backward`` sweeps it once in reverse.
"""

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core import Potential


VJP = Callable[[np.ndarray], np.ndarray]


class Node:
    """Handle to one tape entry."""
    __slots__ = ('tape', 'index')

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"Node({self.tape.ops[self.index]}, shape={self.shape})"


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """Single-use recording of elementary array operations."""

    def __init__(self):
        self.values: List[np.ndarray] = []
        self.ops: List[str] = []
        self.parents: List[Tuple[int, ...]] = []
        self.vjps: List[Tuple[VJP, ...]] = []
        self.requires_grad: List[bool] = []
        self.adjoints: Optional[List[Optional[np.ndarray]]] = None

    def __len__(self):
        return len(self.values)

    def _push(self, op: str, value, parents: Sequence[Node] = (), vjps: Sequence[VJP] = ()) -> Node:
        if self.adjoints is not None:
            raise RuntimeError("tape has already been swept; record a new one")
        for parent in parents:
            if parent.tape is not self:
                raise ValueError("cannot mix nodes from different tapes")
        self.values.append(np.asarray(value, dtype=np.float64))
        self.ops.append(op)
        self.parents.append(tuple(p.index for p in parents))
        self.vjps.append(tuple(vjps))
        self.requires_grad.append(op == 'leaf' or any(self.requires_grad[p.index] for p in parents))
        return Node(self, len(self.values) - 1)

    # Leaves ---------------------------------------------------------------

    def leaf(self, value) -> Node:
        """Differentiated input."""
        return self._push('leaf', np.array(value, dtype=np.float64))

    def constant(self, value) -> Node:
        return self._push('constant', np.array(value, dtype=np.float64))

    # Elementary operations ------------------------------------------------

    def add(self, a: Node, b: Node) -> Node:
        sa, sb = a.shape, b.shape
        return self._push('add', a.value + b.value, (a, b),
                          (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(g, sb)))

    def sub(self, a: Node, b: Node) -> Node:
        sa, sb = a.shape, b.shape
        return self._push('sub', a.value - b.value, (a, b),
                          (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(-g, sb)))

    def mul(self, a: Node, b: Node) -> Node:
        va, vb = a.value, b.value
        return self._push('mul', va * vb, (a, b),
                          (lambda g: _unbroadcast(g * vb, va.shape),
                           lambda g: _unbroadcast(g * va, vb.shape)))

    def square(self, a: Node) -> Node:
        va = a.value
        return self._push('square', va * va, (a,), (lambda g: 2.0 * va * g,))

    def affine(self, a: Node, scale: float = 1.0, shift: float = 0.0) -> Node:
        """scale*a + shift with constant scale and shift."""
        return self._push('affine', scale * a.value + shift, (a,), (lambda g: scale * g,))

    def sum(self, a: Node, axis: Optional[int] = None) -> Node:
        shape = a.shape
        if axis is None:
            return self._push('sum', np.sum(a.value), (a,),
                              (lambda g: np.broadcast_to(g, shape).copy(),))
        return self._push('sum', np.sum(a.value, axis=axis), (a,),
                          (lambda g: np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))

    def mean(self, a: Node, axis: Optional[int] = None) -> Node:
        shape = a.shape
        count = a.value.size if axis is None else shape[axis]
        if axis is None:
            return self._push('mean', np.mean(a.value), (a,),
                              (lambda g: np.broadcast_to(g / count, shape).copy(),))
        return self._push('mean', np.mean(a.value, axis=axis), (a,),
                          (lambda g: np.broadcast_to(np.expand_dims(g / count, axis), shape).copy(),))

    def cumsum(self, a: Node, initial: Node) -> Node:
        """
        Prefix sums along the last axis starting from ``initial``:
        out[..., 0] = initial, out[..., j+1] = out[..., j] + a[..., j].
        """
        va, vi = a.value, initial.value
        stacked = np.concatenate([vi[..., None], va], axis=-1)

        def vjp_a(g):
            # out[j] depends on a[i] for every j > i
            tail = g[..., 1:]
            return np.flip(np.cumsum(np.flip(tail, axis=-1), axis=-1), axis=-1)

        def vjp_initial(g):
            return np.sum(g, axis=-1)

        return self._push('cumsum', np.cumsum(stacked, axis=-1), (a, initial), (vjp_a, vjp_initial))

    def take(self, a: Node, index) -> Node:
        """Basic (non-fancy) indexing."""
        shape = a.shape

        def vjp(g):
            out = np.zeros(shape, dtype=np.float64)
            out[index] = g
            return out

        return self._push('take', a.value[index], (a,), (vjp,))

    def potential(self, p: Potential, a: Node) -> Node:
        """Composite node p(a) with the analytic derivative stored."""
        va = a.value
        slope = p.d1(va)
        return self._push(f'potential[{type(p).__name__}]', p.value(va), (a,), (lambda g: g * slope,))

    # Reverse sweep --------------------------------------------------------

    def backward(self, output: Node) -> None:
        """Fill adjoints of every node reachable from ``output``."""
        if self.adjoints is not None:
            raise RuntimeError("tape is single-use and has already been swept")
        adjoints: List[Optional[np.ndarray]] = [None] * len(self.values)
        adjoints[output.index] = np.ones_like(output.value)

        for index in range(output.index, -1, -1):
            adj = adjoints[index]
            if adj is None or not self.requires_grad[index]:
                continue
            for parent, vjp in zip(self.parents[index], self.vjps[index]):
                if not self.requires_grad[parent]:
                    continue
                contribution = vjp(adj)
                if adjoints[parent] is None:
                    adjoints[parent] = contribution
                else:
                    adjoints[parent] = adjoints[parent] + contribution
        self.adjoints = adjoints

    def grad(self, node: Node) -> np.ndarray:
        if self.adjoints is None:
            raise RuntimeError("call backward() before reading gradients")
        adj = self.adjoints[node.index]
        return np.zeros_like(node.value) if adj is None else adj

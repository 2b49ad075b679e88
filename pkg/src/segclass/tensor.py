"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps an ndarray plus an optional gradient. Operations (here
and in ``ops``) record a backward closure and their parent tensors;
``Tensor.backward()`` walks the recorded graph once in reverse topological
order and accumulates gradients additively, so values feeding several
consumers receive the sum of all downstream contributions.

Precision follows the data: build parameters as float64 for checking
gradients against finite differences, float32 for fast training. Nothing
here mutates ``data`` in place, which keeps recorded graphs valid.
"""

import contextlib
import threading

import numpy as np

# per-thread so concurrent training and no_grad inference don't interfere
_STATE = threading.local()


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (cheap inference path)."""
    saved = grad_enabled()
    _STATE.grad_enabled = False
    try:
        yield
    finally:
        _STATE.grad_enabled = saved


def grad_enabled():
    return getattr(_STATE, "grad_enabled", True)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward_fn = None

    @classmethod
    def from_op(cls, data, parents, backward_fn):
        """Result tensor of an op; records the closure only when it matters."""
        out = cls(data)
        if grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self):
        return Tensor(self.data)

    def accumulate(self, g):
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def backward(self):
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise RuntimeError(
                "backward() called on a tensor with no recorded computation; "
                "run a forward pass with gradients enabled first"
            )
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # -- small arithmetic surface, enough for losses and tests --------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            data = self.data + other.data

            def bwd(g):
                self.accumulate(_unbroadcast(g, self.shape))
                other.accumulate(_unbroadcast(g, other.shape))

            return Tensor.from_op(data, (self, other), bwd)
        data = self.data + other

        def bwd(g):
            self.accumulate(g)

        return Tensor.from_op(data, (self,), bwd)

    __radd__ = __add__

    def __neg__(self):
        def bwd(g):
            self.accumulate(-g)

        return Tensor.from_op(-self.data, (self,), bwd)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Tensor) else -other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            data = self.data * other.data

            def bwd(g):
                self.accumulate(_unbroadcast(g * other.data, self.shape))
                other.accumulate(_unbroadcast(g * self.data, other.shape))

            return Tensor.from_op(data, (self, other), bwd)
        data = self.data * other

        def bwd(g):
            self.accumulate(g * other)

        return Tensor.from_op(data, (self,), bwd)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __pow__(self, exponent):
        data = self.data**exponent

        def bwd(g):
            self.accumulate(g * exponent * self.data ** (exponent - 1))

        return Tensor.from_op(data, (self,), bwd)

    def sum(self):
        def bwd(g):
            self.accumulate(np.broadcast_to(g, self.shape).astype(self.dtype, copy=True))

        return Tensor.from_op(np.asarray(self.data.sum()), (self,), bwd)

    def mean(self):
        return self.sum() / self.data.size

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, grad={'yes' if self.requires_grad else 'no'})"


def _unbroadcast(g, shape):
    """Sum g down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g

"""Tiny reverse-mode tape over numpy arrays.

Only the fixed op set the U-Net needs lives on top of this (see ops.py);
there is no broadcasting calculus or shape inference beyond what those ops
provide. float32 for training, float64 for gradient checks.
"""

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(
            p.requires_grad for p in parents)
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, grad):
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self, seed=None):
        """Reverse-accumulate gradients into every requires_grad ancestor."""
        topo = []
        state = {}  # id -> 1 in progress, 2 emitted
        stack = [self]
        while stack:
            node = stack[-1]
            st = state.get(id(node), 0)
            if st == 0:
                state[id(node)] = 1
                for p in node.parents:
                    if p.requires_grad and state.get(id(p), 0) == 0:
                        stack.append(p)
            else:
                stack.pop()
                if st == 1:
                    state[id(node)] = 2
                    topo.append(node)
        if seed is None:
            if self.data.ndim != 0:
                raise ValueError("backward() without seed needs a scalar")
            seed = np.ones((), dtype=self.data.dtype)
        self.accumulate(seed)
        for node in reversed(topo):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)


class Parameter(Tensor):
    """Learnable leaf tensor."""

    def __init__(self, data):
        super().__init__(np.asarray(data), requires_grad=True)

    def zero_grad(self):
        self.grad = None

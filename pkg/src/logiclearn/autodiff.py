"""Reverse-mode automatic differentiation over dense float64 arrays.

A small define-by-run tape: each operation returns a `Node` holding a numpy
array together with vector-Jacobian callbacks into its parents.  Graphs are
rebuilt on every forward pass and are confined to a single worker; only the
operations the fuzzy-logic forward pass, the recurrent value head, and the
losses need are provided (no general broadcasting, no convolutions, no
higher-order derivatives).

Gradient accumulation never mutates arrays in place, so vjp callbacks are
free to return views of their upstream gradient.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation forwards)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Node:
    """One value in the computation graph.

    parents is a sequence of (parent node, vjp) pairs where vjp maps the
    gradient at this node to the gradient contribution for that parent.
    Leaves have no parents; trainable leaves set requires_grad.
    """

    __slots__ = ("value", "parents", "grad", "requires_grad", "_backward_ran")

    def __init__(self, value, parents=(), requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        if _grad_enabled:
            parents = tuple((p, fn) for p, fn in parents if p.requires_grad)
        else:
            parents = ()
        self.parents = parents
        self.requires_grad = requires_grad or bool(parents)
        self.grad = None
        self._backward_ran = False

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other) if isinstance(other, Node) else add_const(self, other)

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Node) else add_const(self, -other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Node) else scale(self, other)


def leaf(value, requires_grad=False) -> Node:
    return Node(value, (), requires_grad=requires_grad)


def constant(value) -> Node:
    return Node(value, (), requires_grad=False)


def backward(root: Node):
    """Accumulate gradients of a scalar root into every reachable node.

    Reverse topological traversal; calling twice on the same root without
    rebuilding the graph is an error.
    """
    if root.value.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.value.shape}")
    if root._backward_ran:
        raise RuntimeError("backward already ran for this root; rebuild the graph first")
    root._backward_ran = True

    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    root.grad = np.ones_like(root.value)
    for node in reversed(topo):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib


def zero_grads(params: Sequence[Node]):
    for p in params:
        p.grad = None


def _check_same_shape(a: Node, b: Node, op: str):
    if a.value.shape != b.value.shape:
        raise ValueError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "add")
    return Node(a.value + b.value, [(a, lambda g: g), (b, lambda g: g)])


def sub(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "sub")
    return Node(a.value - b.value, [(a, lambda g: g), (b, lambda g: -g)])


def mul(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "mul")
    return Node(a.value * b.value,
                [(a, lambda g: g * b.value), (b, lambda g: g * a.value)])


def elementwise(op: str, a: Node, b: Node) -> Node:
    if op == "add":
        return add(a, b)
    if op == "mul":
        return mul(a, b)
    raise ValueError(f"unknown elementwise op {op!r}")


def scale(a: Node, c: float) -> Node:
    c = float(c)
    return Node(a.value * c, [(a, lambda g: g * c)])


def add_const(a: Node, c) -> Node:
    c = np.asarray(c, dtype=np.float64)
    if np.broadcast_shapes(a.value.shape, c.shape) != a.value.shape:
        raise ValueError(f"add_const: constant {c.shape} does not fit {a.value.shape}")
    return Node(a.value + c, [(a, lambda g: g)])


def mul_const(a: Node, c) -> Node:
    c = np.asarray(c, dtype=np.float64)
    if np.broadcast_shapes(a.value.shape, c.shape) != a.value.shape:
        raise ValueError(f"mul_const: constant {c.shape} does not fit {a.value.shape}")
    return Node(a.value * c, [(a, lambda g: g * c)])


def affine_neg(a: Node) -> Node:
    """Componentwise 1 - a; involutive, gradient -1 per component."""
    return Node(1.0 - a.value, [(a, lambda g: -g)])


def clip(a: Node, lo: float, hi: float) -> Node:
    """Clamp values to [lo, hi]; gradient flows only strictly inside."""
    v = np.clip(a.value, lo, hi)
    mask = (a.value > lo) & (a.value < hi)
    return Node(v, [(a, lambda g: g * mask)])


def minimum(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "minimum")
    take_a = a.value <= b.value  # ties go to the first argument
    return Node(np.where(take_a, a.value, b.value),
                [(a, lambda g: g * take_a), (b, lambda g: g * ~take_a)])


def maximum(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "maximum")
    take_a = a.value >= b.value
    return Node(np.where(take_a, a.value, b.value),
                [(a, lambda g: g * take_a), (b, lambda g: g * ~take_a)])


# ---------------------------------------------------------------------------
# nonlinearities

def exp(a: Node) -> Node:
    v = np.exp(a.value)
    return Node(v, [(a, lambda g: g * v)])


def log(a: Node) -> Node:
    if np.any(a.value <= 0.0):
        raise ValueError("log requires strictly positive input; clamp first")
    return Node(np.log(a.value), [(a, lambda g: g / a.value)])


def sigmoid(a: Node) -> Node:
    x = a.value
    v = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return Node(v, [(a, lambda g: g * v * (1.0 - v))])


def tanh(a: Node) -> Node:
    v = np.tanh(a.value)
    return Node(v, [(a, lambda g: g * (1.0 - v * v))])


# ---------------------------------------------------------------------------
# shape / axis operations

def reduce(a: Node, axis: int, mode: str) -> Node:
    """Max or min over one axis.

    Backward routes the incoming gradient only to the winning element; ties
    break to the lowest index along the reduced axis.
    """
    rank = a.value.ndim
    if not 0 <= axis < rank:
        raise ValueError(f"reduce: axis {axis} out of range for rank {rank}")
    if a.value.shape[axis] < 1:
        raise ValueError("reduce: axis dimension must be >= 1")
    if mode == "max":
        idx = np.argmax(a.value, axis=axis)
        v = np.max(a.value, axis=axis)
    elif mode == "min":
        idx = np.argmin(a.value, axis=axis)
        v = np.min(a.value, axis=axis)
    else:
        raise ValueError(f"reduce: unknown mode {mode!r}")

    def vjp(g):
        out = np.zeros_like(a.value)
        np.put_along_axis(out, np.expand_dims(idx, axis),
                          np.expand_dims(g, axis), axis)
        return out

    return Node(v, [(a, vjp)])


def permute_axes(a: Node, sigma: Sequence[int]) -> Node:
    """out[i_0, ..] = a[i_{sigma(0)}, ..]; sigma must be a bijection on axes."""
    sigma = tuple(int(s) for s in sigma)
    if sorted(sigma) != list(range(a.value.ndim)):
        raise ValueError(f"permute_axes: {sigma} is not a permutation of axes of rank {a.value.ndim}")
    inv = np.argsort(sigma)
    return Node(np.transpose(a.value, sigma),
                [(a, lambda g: np.transpose(g, inv))])


def expand_axis(a: Node, pos: int, n: int) -> Node:
    """Insert a broadcast axis of size n at position pos; backward sums it out."""
    if n < 1:
        raise ValueError("expand_axis: size must be >= 1")
    v = np.broadcast_to(np.expand_dims(a.value, pos),
                        a.value.shape[:pos] + (n,) + a.value.shape[pos:])
    return Node(v, [(a, lambda g: g.sum(axis=pos))])


def broadcast_last(a: Node, n: int) -> Node:
    """Append a trailing axis of size n replicating values."""
    if n < 1:
        raise ValueError("broadcast_last: size must be >= 1")
    return expand_axis(a, a.value.ndim, n)


def reshape(a: Node, shape) -> Node:
    orig = a.value.shape
    return Node(a.value.reshape(shape), [(a, lambda g: g.reshape(orig))])


def concat_last(nodes: Sequence[Node]) -> Node:
    nodes = list(nodes)
    if not nodes:
        raise ValueError("concat_last: need at least one node")
    lead = nodes[0].value.shape[:-1]
    for nd in nodes[1:]:
        if nd.value.shape[:-1] != lead:
            raise ValueError(f"concat_last: shape mismatch {nd.value.shape} vs {nodes[0].value.shape}")
    widths = [nd.value.shape[-1] for nd in nodes]
    offsets = np.cumsum([0] + widths)
    parents = []
    for k, nd in enumerate(nodes):
        lo, hi = offsets[k], offsets[k + 1]
        parents.append((nd, lambda g, lo=lo, hi=hi: g[..., lo:hi]))
    return Node(np.concatenate([nd.value for nd in nodes], axis=-1), parents)


def stack_last(nodes: Sequence[Node]) -> Node:
    nodes = list(nodes)
    for nd in nodes[1:]:
        _check_same_shape(nodes[0], nd, "stack_last")
    parents = [(nd, lambda g, k=k: g[..., k]) for k, nd in enumerate(nodes)]
    return Node(np.stack([nd.value for nd in nodes], axis=-1), parents)


def index_select_last(a: Node, idx) -> Node:
    """Gather along the last axis; backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.intp)
    unique = len(np.unique(idx)) == idx.size

    def vjp(g):
        out = np.zeros_like(a.value)
        if unique:
            out[..., idx] = g
        else:
            np.add.at(out, (..., idx), g)
        return out

    return Node(a.value[..., idx], [(a, vjp)])


def index_axis(a: Node, axis: int, i: int) -> Node:
    """Select one index along an axis, removing it."""
    if not 0 <= axis < a.value.ndim:
        raise ValueError(f"index_axis: axis {axis} out of range")

    def vjp(g):
        out = np.zeros_like(a.value)
        sl = [slice(None)] * a.value.ndim
        sl[axis] = i
        out[tuple(sl)] = g
        return out

    return Node(np.take(a.value, i, axis=axis), [(a, vjp)])


def add_rowvec(mat: Node, vec: Node) -> Node:
    """mat[..., S] + vec[S]; backward sums the leading axes into vec."""
    s = vec.value.shape
    if len(s) != 1 or mat.value.shape[-1] != s[0]:
        raise ValueError(f"add_rowvec: {mat.value.shape} + {s} do not align")
    return Node(mat.value + vec.value,
                [(mat, lambda g: g),
                 (vec, lambda g: g.reshape(-1, s[0]).sum(axis=0))])


def take_pairs(a: Node, rows, cols) -> Node:
    """Gather a[rows[k], cols[k]] from a 2-D node."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    if a.value.ndim != 2:
        raise ValueError("take_pairs: expected a 2-D node")

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, (rows, cols), g)
        return out

    return Node(a.value[rows, cols], [(a, vjp)])


def sum_all(a: Node) -> Node:
    shp = a.value.shape
    return Node(a.value.sum(), [(a, lambda g: np.broadcast_to(g, shp))])


def sum_axis(a: Node, axis: int) -> Node:
    if not 0 <= axis < a.value.ndim:
        raise ValueError(f"sum_axis: axis {axis} out of range")
    shp = a.value.shape
    return Node(a.value.sum(axis=axis),
                [(a, lambda g: np.broadcast_to(np.expand_dims(g, axis), shp))])


def mean_all(a: Node) -> Node:
    return scale(sum_all(a), 1.0 / a.value.size)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValueError(f"matmul: expected 2-D nodes, got {a.value.shape} and {b.value.shape}")
    if a.value.shape[1] != b.value.shape[0]:
        raise ValueError(f"matmul: inner dims differ {a.value.shape} vs {b.value.shape}")
    return Node(a.value @ b.value,
                [(a, lambda g: g @ b.value.T), (b, lambda g: a.value.T @ g)])


def matvec(m: Node, v: Node) -> Node:
    if m.value.ndim != 2 or v.value.ndim != 1:
        raise ValueError(f"matvec: expected 2-D and 1-D, got {m.value.shape} and {v.value.shape}")
    if m.value.shape[1] != v.value.shape[0]:
        raise ValueError(f"matvec: dims differ {m.value.shape} vs {v.value.shape}")
    return Node(m.value @ v.value,
                [(m, lambda g: np.outer(g, v.value)), (v, lambda g: m.value.T @ g)])


def weighted_sum(tensors: Sequence[Node], weights: Node) -> Node:
    """sum_k weights[k] * tensors[k]; gradients flow to both sides."""
    tensors = list(tensors)
    if weights.value.ndim != 1 or len(tensors) != weights.value.shape[0]:
        raise ValueError(f"weighted_sum: {len(tensors)} tensors vs {weights.value.shape} weights")
    for t in tensors[1:]:
        _check_same_shape(tensors[0], t, "weighted_sum")
    stack = np.stack([t.value for t in tensors])
    v = np.tensordot(weights.value, stack, axes=1)
    parents = [(weights, lambda g: np.array([np.vdot(g, t.value) for t in tensors]))]
    for k, t in enumerate(tensors):
        parents.append((t, lambda g, k=k: g * weights.value[k]))
    return Node(v, parents)


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_temp(logits: Node, tau: float) -> Node:
    """Temperature softmax of a logit vector; output sums to one."""
    if tau <= 0:
        raise ValueError(f"softmax_temp: temperature must be positive, got {tau}")
    if logits.value.ndim != 1:
        raise ValueError("softmax_temp: logits must be a vector")
    w = _softmax_rows(logits.value / tau)

    def vjp(g):
        return w * (g - np.dot(g, w)) / tau

    return Node(w, [(logits, vjp)])


def softmax_rows(logits: Node, tau: float) -> Node:
    """Row-wise temperature softmax of a 2-D logit matrix."""
    if tau <= 0:
        raise ValueError(f"softmax_rows: temperature must be positive, got {tau}")
    if logits.value.ndim != 2:
        raise ValueError("softmax_rows: logits must be a matrix")
    w = _softmax_rows(logits.value / tau)

    def vjp(g):
        return w * (g - (g * w).sum(axis=-1, keepdims=True)) / tau

    return Node(w, [(logits, vjp)])


# ---------------------------------------------------------------------------
# Adam

class AdamState:
    """Per-parameter moment estimates plus step counter for Adam."""

    def __init__(self, params: Sequence[Node], lr=0.005, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        """One Adam update with bias correction, reading each param's .grad."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for k, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = 0.0
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * np.square(g)
            m_hat = self.m[k] / corr1
            v_hat = self.v[k] / corr2
            p.value = p.value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_update(params, grads, state: AdamState):
    """Functional Adam step over plain arrays; returns the updated arrays."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    out = []
    for k, (p, g) in enumerate(zip(params, grads)):
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * np.square(g)
        out.append(p - state.lr * (state.m[k] / corr1) / (np.sqrt(state.v[k] / corr2) + state.eps))
    return out

"""Reverse-mode automatic differentiation on float64 numpy arrays.

Every operation records a node on a tape (the ``Value`` graph).  Backward
rules are themselves built out of recorded operations, so the output of
``gradient`` is an ordinary ``Value`` and can be differentiated again.
That nesting is what lets a training loss defined on input-gradients of a
network be differentiated with respect to the network parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


class Value:
    """A node in the computation record: float64 array data plus parents."""

    __slots__ = ("data", "_parents", "_vjp")

    def __init__(self, data, _parents=(), _vjp=None):
        if isinstance(data, np.ndarray) and data.dtype == np.float64:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Value(shape={self.data.shape})"

    # operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)


def as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def constant(x) -> Value:
    """A leaf with no parents; gradients never flow into it."""
    return Value(x)


# ---------------------------------------------------------------------------
# primitives


def _sum_to_shape(g: Value, shape) -> Value:
    """Reverse numpy broadcasting: reduce g down to `shape`."""
    while g.data.ndim > len(shape):
        g = vsum(g, axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.data.shape[axis] != 1:
            g = vsum(g, axis=axis, keepdims=True)
    return g


def add(a, b) -> Value:
    a, b = as_value(a), as_value(b)

    def vjp(g):
        return _sum_to_shape(g, a.data.shape), _sum_to_shape(g, b.data.shape)

    return Value(a.data + b.data, (a, b), vjp)


def sub(a, b) -> Value:
    a, b = as_value(a), as_value(b)

    def vjp(g):
        return _sum_to_shape(g, a.data.shape), _sum_to_shape(neg(g), b.data.shape)

    return Value(a.data - b.data, (a, b), vjp)


def mul(a, b) -> Value:
    a, b = as_value(a), as_value(b)

    def vjp(g):
        return (_sum_to_shape(mul(g, b), a.data.shape),
                _sum_to_shape(mul(g, a), b.data.shape))

    return Value(a.data * b.data, (a, b), vjp)


def div(a, b) -> Value:
    a, b = as_value(a), as_value(b)

    def vjp(g):
        return (_sum_to_shape(div(g, b), a.data.shape),
                _sum_to_shape(neg(div(mul(g, a), mul(b, b))), b.data.shape))

    return Value(a.data / b.data, (a, b), vjp)


def neg(a) -> Value:
    a = as_value(a)
    return Value(-a.data, (a,), lambda g: (neg(g),))


def power(a, exponent: float) -> Value:
    a = as_value(a)
    exponent = float(exponent)

    def vjp(g):
        return (mul(g, mul(constant(exponent), power(a, exponent - 1.0))),)

    return Value(a.data ** exponent, (a,), vjp)


def exp(a) -> Value:
    a = as_value(a)
    out = Value(np.exp(a.data), (a,), None)
    out._vjp = lambda g: (mul(g, out),)
    return out


def log(a) -> Value:
    a = as_value(a)
    return Value(np.log(a.data), (a,), lambda g: (div(g, a),))


def log1p(a) -> Value:
    a = as_value(a)
    return Value(np.log1p(a.data), (a,), lambda g: (div(g, add(a, constant(1.0))),))


def maximum(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    mask = (a.data >= b.data).astype(np.float64)

    def vjp(g):
        return (_sum_to_shape(mul(g, constant(mask)), a.data.shape),
                _sum_to_shape(mul(g, constant(1.0 - mask)), b.data.shape))

    return Value(np.maximum(a.data, b.data), (a, b), vjp)


def absolute(a) -> Value:
    a = as_value(a)
    sign = np.sign(a.data)
    return Value(np.abs(a.data), (a,), lambda g: (mul(g, constant(sign)),))


def matmul(a, b) -> Value:
    a, b = as_value(a), as_value(b)

    def vjp(g):
        return matmul(g, transpose(b)), matmul(transpose(a), g)

    return Value(a.data @ b.data, (a, b), vjp)


def transpose(a) -> Value:
    a = as_value(a)
    return Value(a.data.T, (a,), lambda g: (transpose(g),))


def reshape(a, shape) -> Value:
    a = as_value(a)
    orig = a.data.shape
    return Value(a.data.reshape(shape), (a,), lambda g: (reshape(g, orig),))


def broadcast_to(a, shape) -> Value:
    a = as_value(a)
    orig = a.data.shape
    return Value(np.broadcast_to(a.data, shape).copy(), (a,),
                 lambda g: (_sum_to_shape(g, orig),))


def vsum(a, axis=None, keepdims=False) -> Value:
    """Summation over axes; named to avoid shadowing builtins."""
    a = as_value(a)
    orig = a.data.shape

    def vjp(g):
        if axis is None:
            return (broadcast_to(reshape(g, (1,) * len(orig)), orig),)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(orig) for ax in axes)
        if keepdims:
            kept = g
        else:
            kd_shape = tuple(1 if i in axes else s for i, s in enumerate(orig))
            kept = reshape(g, kd_shape)
        return (broadcast_to(kept, orig),)

    return Value(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis=None, keepdims=False) -> Value:
    a = as_value(a)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in ((axis,) if isinstance(axis, int) else axis)])
    return mul(vsum(a, axis=axis, keepdims=keepdims), constant(1.0 / count))


def concat(values, axis=0) -> Value:
    values = [as_value(v) for v in values]
    sizes = [v.data.shape[axis] for v in values]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def vjp(g):
        return tuple(narrow(g, axis, int(offsets[i]), sizes[i])
                     for i in range(len(values)))

    return Value(np.concatenate([v.data for v in values], axis=axis),
                 tuple(values), vjp)


def narrow(a, axis: int, start: int, length: int) -> Value:
    a = as_value(a)
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    total = a.data.shape[axis]
    return Value(a.data[tuple(index)].copy(), (a,),
                 lambda g: (pad_narrow(g, axis, start, total),))


def pad_narrow(a, axis: int, start: int, total: int) -> Value:
    """Embed `a` into a zero array whose `axis` has size `total`."""
    a = as_value(a)
    out = np.zeros(a.data.shape[:axis] + (total,) + a.data.shape[axis + 1:])
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + a.data.shape[axis])
    out[tuple(index)] = a.data
    length = a.data.shape[axis]
    return Value(out, (a,), lambda g: (narrow(g, axis, start, length),))


def take_rows(a, idx: np.ndarray) -> Value:
    a = as_value(a)
    n = a.data.shape[0]
    return Value(a.data[idx], (a,), lambda g: (scatter_rows(g, idx, n),))


_scatter_cache: dict = {}


def _scatter_matrix(idx: np.ndarray, num_rows: int) -> np.ndarray:
    """One-hot (num_rows, len(idx)) matrix so scatter-add becomes a matmul.

    The index arrays of a batch template are reused thousands of times per
    training run, so the matrices are cached by content.
    """
    key = (idx.tobytes(), num_rows)
    m = _scatter_cache.get(key)
    if m is None:
        if len(_scatter_cache) > 512:
            _scatter_cache.clear()
        m = np.zeros((num_rows, idx.shape[0]))
        m[idx, np.arange(idx.shape[0])] = 1.0
        _scatter_cache[key] = m
    return m


def scatter_rows(a, idx: np.ndarray, num_rows: int) -> Value:
    """Row-wise scatter-add: out[idx[j]] += a[j]."""
    a = as_value(a)
    out = _scatter_matrix(idx, num_rows) @ a.data
    return Value(out, (a,), lambda g: (take_rows(g, idx),))


def sigmoid(x) -> Value:
    """Logistic function as a single fused node; overflow-safe."""
    x = as_value(x)
    return _sigmoid_node(x, np.exp(-np.abs(x.data)))


def _sigmoid_node(x: Value, e: np.ndarray) -> Value:
    """Build the sigmoid node from a precomputed e = exp(-|x|)."""
    data = e / (1.0 + e)          # sigmoid(-|x|)
    np.subtract(1.0, data, out=data, where=x.data >= 0)
    out = Value(data, (x,), None)
    out._vjp = lambda g: (mul(g, mul(out, sub(constant(1.0), out))),)
    return out


def softplus(x) -> Value:
    """log(1 + exp(x)) in the overflow-safe form max(x, 0) + log1p(exp(-|x|)).

    Fused into one node; its backward rule (the logistic function) is
    recorded on the tape, so the result stays differentiable to any depth.
    """
    x = as_value(x)
    e = np.exp(-np.abs(x.data))
    data = np.maximum(x.data, 0.0) + np.log1p(e)
    return Value(data, (x,), lambda g: (mul(g, _sigmoid_node(x, e)),))


def affine(x, w, b) -> Value:
    """x @ w + b as one fused node (the workhorse of every MLP layer)."""
    x, w, b = as_value(x), as_value(w), as_value(b)
    if x.data.shape[-1] != w.data.shape[0]:
        raise ValueError(
            f"input width {x.data.shape[-1]} does not match layer fan-in {w.data.shape[0]}")

    def vjp(g):
        return (matmul(g, transpose(w)), matmul(transpose(x), g),
                _sum_to_shape(g, b.data.shape))

    return Value(x.data @ w.data + b.data, (x, w, b), vjp)


# ---------------------------------------------------------------------------
# gradients


def _toposort(root: Value):
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order  # parents precede children


def gradient(scalar_output: Value, wrt):
    """Reverse-mode gradient of a scalar with respect to one or more Values.

    Returns a Value (or list of Values, matching `wrt`) of the same shape
    as the corresponding input.  The result lives on the tape, so it can be
    differentiated again.
    """
    single = isinstance(wrt, Value)
    wrts = [wrt] if single else list(wrt)
    if scalar_output.data.size != 1:
        raise ValueError(f"gradient needs a scalar output, got shape {scalar_output.data.shape}")

    order = _toposort(scalar_output)
    relevant = {id(w) for w in wrts}
    for node in order:
        if id(node) in relevant:
            continue
        for parent in node._parents:
            if id(parent) in relevant:
                relevant.add(id(node))
                break

    adjoints: dict[int, Value] = {}
    if id(scalar_output) in relevant:
        adjoints[id(scalar_output)] = constant(np.ones_like(scalar_output.data))
    for node in reversed(order):
        g = adjoints.get(id(node))
        if g is None or node._vjp is None:
            continue
        for parent, contrib in zip(node._parents, node._vjp(g)):
            if contrib is None or id(parent) not in relevant:
                continue
            prev = adjoints.get(id(parent))
            adjoints[id(parent)] = contrib if prev is None else add(prev, contrib)

    results = []
    for w in wrts:
        adj = adjoints.get(id(w))
        if adj is None:
            warnings.warn("gradient target is not an ancestor of the output; "
                          "returning zeros", stacklevel=2)
            adj = constant(np.zeros_like(w.data))
        results.append(adj)
    return results[0] if single else results


# ---------------------------------------------------------------------------
# MLP building block


@dataclass
class MLPParams:
    """Per-layer weights/biases.  Arrays may be numpy (storage) or Value (tape)."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @property
    def layer_sizes(self):
        first = self.weights[0]
        data = first.data if isinstance(first, Value) else first
        sizes = [data.shape[0]]
        for w in self.weights:
            data = w.data if isinstance(w, Value) else w
            sizes.append(data.shape[1])
        return sizes

    def lifted(self) -> "MLPParams":
        return MLPParams([as_value(w) for w in self.weights],
                         [as_value(b) for b in self.biases])

    def leaves(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


def init_mlp_params(rng: np.random.Generator, layer_sizes) -> MLPParams:
    """Scaled-uniform weights with bound 1/sqrt(fan_in); zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPParams(weights, biases)


def mlp_forward(params: MLPParams, x) -> Value:
    """Hidden layers with softplus after each, including the last one.

    The non-activated linear output head is a separate layer owned by the
    graph-network parameters, not part of this MLP.
    """
    x = as_value(x)
    for w, b in zip(params.weights, params.biases):
        x = softplus(affine(x, w, b))
    return x


def param_gradient(loss: Value, params: MLPParams) -> MLPParams:
    """Gradients of a scalar loss for every weight and bias of a lifted MLP."""
    leaves = params.leaves()
    grads = gradient(loss, leaves)
    return MLPParams(grads[0::2], grads[1::2])

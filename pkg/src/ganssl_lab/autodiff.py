"""Reverse-mode automatic differentiation on numpy arrays.

Every :class:`Tensor` remembers the tensors it was computed from and a
closure mapping the upstream gradient to gradients for those parents.
Calling :func:`backward` on a scalar tensor walks the graph once in reverse
topological order and accumulates gradients.  Nodes hold whole arrays rather
than scalars, which keeps a 1-100-100-1 network with a few hundred samples
per step cheap enough to train in pure Python.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, NumericError, ShapeError


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Tensor:
    """An array-valued node of a differentiation graph."""

    # make ``ndarray <op> Tensor`` dispatch to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, data, parents=(), backward_fn=None, op="", requires_grad=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = tuple(parents)
        self._backward_fn = backward_fn
        self.op = op
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self._parents)
        self.requires_grad = requires_grad

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __len__(self):
        if self.data.ndim == 0:
            raise TypeError("len() of a 0-d tensor")
        return self.data.shape[0]

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy(), requires_grad=False)

    def backward(self):
        return backward(self)

    # -- elementwise arithmetic -------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        need_a, need_b = self.requires_grad, other.requires_grad
        return Tensor(
            self.data + other.data,
            (self, other),
            lambda g: (
                _unbroadcast(g, a_shape) if need_a else None,
                _unbroadcast(g, b_shape) if need_b else None,
            ),
            "add",
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        need_a, need_b = self.requires_grad, other.requires_grad
        return Tensor(
            a * b,
            (self, other),
            lambda g: (
                _unbroadcast(g * b, a.shape) if need_a else None,
                _unbroadcast(g * a, b.shape) if need_b else None,
            ),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        need_a, need_b = self.requires_grad, other.requires_grad
        return Tensor(
            a / b,
            (self, other),
            lambda g: (
                _unbroadcast(g / b, a.shape) if need_a else None,
                _unbroadcast(-g * a / (b * b), b.shape) if need_b else None,
            ),
            "div",
        )

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        a = self.data
        return Tensor(a**exponent, (self,), lambda g: (g * exponent * a ** (exponent - 1),), "pow")

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2:
            raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
        need_a, need_b = self.requires_grad, other.requires_grad
        return Tensor(
            a @ b,
            (self, other),
            lambda g: (g @ b.T if need_a else None, a.T @ g if need_b else None),
            "matmul",
        )

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    # -- unary functions -------------------------------------------------------

    def exp(self):
        out = np.exp(self.data)
        return Tensor(out, (self,), lambda g: (g * out,), "exp")

    def log(self):
        a = self.data
        return Tensor(np.log(a), (self,), lambda g: (g / a,), "log")

    def relu(self):
        # subgradient at exactly 0 is 0
        mask = self.data > 0
        return Tensor(np.where(mask, self.data, 0.0), (self,), lambda g: (g * mask,), "relu")

    def abs(self):
        sign = np.sign(self.data)
        return Tensor(np.abs(self.data), (self,), lambda g: (g * sign,), "abs")

    def softplus(self):
        a = self.data
        return Tensor(np.logaddexp(0.0, a), (self,), lambda g: (g * _sigmoid(a),), "softplus")

    def clamp_min(self, floor):
        """``max(x, floor)`` with zero gradient wherever the floor is active."""
        mask = self.data > floor
        return Tensor(np.where(mask, self.data, floor), (self,), lambda g: (g * mask,), "clamp_min")

    # -- reductions and shape ----------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def fn(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,), fn, "sum")

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def logsumexp(self, axis=-1, keepdims=False):
        a = self.data
        m = a.max(axis=axis, keepdims=True)
        shifted = np.exp(a - m)
        total = shifted.sum(axis=axis, keepdims=True)
        out = m + np.log(total)
        weights = shifted / total

        def fn(g):
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (g * weights,)

        return Tensor(out if keepdims else np.squeeze(out, axis=axis), (self,), fn, "logsumexp")

    def reshape(self, *shape):
        old = self.shape
        return Tensor(self.data.reshape(*shape), (self,), lambda g: (g.reshape(old),), "reshape")

    @property
    def T(self):
        return Tensor(self.data.T, (self,), lambda g: (g.T,), "transpose")

    def __getitem__(self, index):
        shape = self.shape

        def fn(g):
            out = np.zeros(shape)
            np.add.at(out, index, g)
            return (out,)

        return Tensor(self.data[index], (self,), fn, "getitem")


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, requires_grad=False)


def parameter(data):
    """Leaf tensor that collects gradients."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


# Dual-use helpers: the divergence and density code runs unchanged on plain
# arrays (verification) and on Tensors (training).

def value_of(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def log(x):
    return x.log() if isinstance(x, Tensor) else np.log(x)


def exp(x):
    return x.exp() if isinstance(x, Tensor) else np.exp(x)


def absolute(x):
    return x.abs() if isinstance(x, Tensor) else np.abs(x)


def clamp_min(x, floor):
    return x.clamp_min(floor) if isinstance(x, Tensor) else np.maximum(x, floor)


def total(x, axis=None):
    return x.sum(axis=axis) if isinstance(x, Tensor) else np.sum(x, axis=axis)


def topological_order(output):
    """Nodes reachable from ``output``, every node after all of its inputs."""
    order, seen = [], set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(output):
    """Accumulate d(output)/d(node) for every node; returns ``{node: grad}``.

    Leaf tensors also receive the result in ``.grad`` (overwritten, not added).
    """
    if not isinstance(output, Tensor) or output.data.size != 1:
        shape = getattr(output, "shape", None)
        raise ContractError(f"backward needs a scalar output, got shape {shape}")
    order = topological_order(output)
    grads = {id(output): np.ones_like(output.data)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._backward_fn is None:
            continue
        for parent, pg in zip(node._parents, node._backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    result = {}
    for node in order:
        g = grads.get(id(node))
        if g is None:
            g = np.zeros_like(node.data)
        g = np.reshape(g, node.data.shape)
        result[node] = g
        if not node._parents:
            node.grad = g
    return result


# -- multilayer perceptrons ------------------------------------------------------

@dataclass
class MlpParams:
    """Weights ``W[i]`` of shape ``(dims[i], dims[i+1])`` and biases ``b[i]``.

    ReLU on hidden layers, identity on the output layer.
    """

    layer_dims: tuple
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ShapeError(f"bad layer_dims {self.layer_dims}")
        n_layers = len(self.layer_dims) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ShapeError("need one weight matrix and one bias vector per layer")
        self.weights = [w if isinstance(w, Tensor) else parameter(w) for w in self.weights]
        self.biases = [b if isinstance(b, Tensor) else parameter(b) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            fan_in, fan_out = self.layer_dims[i], self.layer_dims[i + 1]
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ShapeError(
                    f"layer {i}: expected W {(fan_in, fan_out)} and b {(fan_out,)}, "
                    f"got {w.shape} and {b.shape}"
                )
            if not (np.all(np.isfinite(w.data)) and np.all(np.isfinite(b.data))):
                raise NumericError(f"layer {i} has non-finite parameters")

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @property
    def n_params(self):
        return sum(p.size for p in self.parameters())

    def copy(self):
        return MlpParams(
            self.layer_dims,
            [parameter(w.data) for w in self.weights],
            [parameter(b.data) for b in self.biases],
        )


def init_mlp(layer_dims: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(layer_dims), weights, biases)


def forward_mlp(params: MlpParams, x) -> Tensor:
    """Evaluate the network on one input vector or a ``(batch, d_in)`` array."""
    h = as_tensor(x)
    single = h.ndim == 1
    if single:
        h = h.reshape(1, -1)
    if h.ndim != 2 or h.shape[1] != params.layer_dims[0]:
        raise ShapeError(f"input shape {as_tensor(x).shape} does not match input dim {params.layer_dims[0]}")
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = h.relu()
    return h.reshape(-1) if single else h


# -- finite-difference check ----------------------------------------------------------

def _param_list(params) -> list:
    if isinstance(params, MlpParams):
        return params.parameters()
    if isinstance(params, Tensor):
        return [params]
    if hasattr(params, "parameters"):
        return list(params.parameters())
    return list(params)


def _scalar(value) -> float:
    v = float(value_of(value))
    if not np.isfinite(v):
        raise NumericError(f"objective is not finite: {v}")
    return v


def grad_check(
    objective: Callable,
    params,
    step: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max over parameters of ``|autodiff - central difference| / max(1, |central difference|)``.

    ``objective(params)`` must return a scalar Tensor built from the parameter
    tensors.  With ``max_entries`` only a random subset of entries is probed.
    """
    if step <= 0:
        raise ContractError("step must be positive")
    tensors = _param_list(params)
    out = objective(params)
    _scalar(out)
    grads = backward(out) if isinstance(out, Tensor) else {}
    analytic = [grads.get(t, np.zeros_like(t.data)).reshape(-1) for t in tensors]

    entries = [(k, i) for k, t in enumerate(tensors) for i in range(t.size)]
    if max_entries is not None and max_entries < len(entries):
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(entries), size=max_entries, replace=False)
        entries = [entries[j] for j in sorted(pick)]

    worst = 0.0
    for k, i in entries:
        flat = tensors[k].data.reshape(-1)
        original = flat[i]
        flat[i] = original + step
        f_plus = _scalar(objective(params))
        flat[i] = original - step
        f_minus = _scalar(objective(params))
        flat[i] = original
        numeric = (f_plus - f_minus) / (2.0 * step)
        err = abs(analytic[k][i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst


def zero_grads(tensors: Iterable[Tensor]):
    for t in tensors:
        t.grad = None

"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every op records its inputs and a backward closure on the output tensor.
``Tensor.backward`` collects the reachable nodes and runs the closures in
reverse creation order, so each node is visited exactly once and gradients
of tensors feeding several consumers are summed.
"""

import itertools
import threading
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from . import _kernels

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

_counter = itertools.count()
_state = threading.local()


def grad_enabled():
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward", "_seq")

    def __init__(self, data, requires_grad=False, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents = ()
        self._backward = None
        self._seq = next(_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def _accum(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.data.shape)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward() needs an explicit grad for shape {self.shape}")
            grad = np.ones_like(self.data)
        nodes = {}
        stack = [self]
        while stack:
            node = stack.pop()
            if node._seq in nodes:
                continue
            nodes[node._seq] = node
            stack.extend(p for p in node._parents if p.requires_grad)
        self._accum(np.asarray(grad, dtype=np.float64))
        for seq in sorted(nodes, reverse=True):
            node = nodes[seq]
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def transpose(self, *axes):
        return transpose(self, axes[0] if len(axes) == 1 else axes)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward, op):
    out = Tensor(data, op=op)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(a, b, name):
    # only trailing-aligned bias-style broadcasting is supported
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from None
    if shape != a.shape and shape != b.shape:
        raise ValueError(f"{name}: incompatible shapes {a.shape} and {b.shape}")


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        a._accum(_unbroadcast(g * b.data, a.shape))
        b._accum(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data

    def backward(g):
        a._accum(_unbroadcast(g / b.data, a.shape))
        b._accum(_unbroadcast(-g * out / b.data, b.shape))

    return _result(out, (a, b), backward, "div")


def scale(x, c):
    x = as_tensor(x)
    c = float(c)
    return _result(x.data * c, (x,), lambda g: x._accum(g * c), "scale")


def gelu(x):
    """Exact GELU, x * Phi(x)."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        x._accum(g * (cdf + x.data * pdf))

    return _result(x.data * cdf, (x,), backward, "gelu")


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _result(out, (x,), lambda g: x._accum(g * (1.0 - out * out)), "tanh")


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return _result(out, (x,), lambda g: x._accum(g * out), "exp")


def log(x):
    x = as_tensor(x)
    return _result(np.log(x.data), (x,), lambda g: x._accum(g / x.data), "log")


def clamp_min(x, floor):
    """max(x, floor); gradient passes only where x > floor."""
    x = as_tensor(x)
    keep = x.data > floor
    return _result(np.where(keep, x.data, floor), (x,), lambda g: x._accum(g * keep), "clamp_min")


_ELEMENTWISE = {"gelu": gelu, "tanh": tanh}


def elementwise(x, kind, other=None):
    """Dispatch by name: add, mul, scale (``other`` is the factor), gelu, tanh."""
    if kind == "add":
        return add(x, other)
    if kind == "mul":
        return mul(x, other)
    if kind == "scale":
        return scale(x, other)
    if kind in _ELEMENTWISE:
        return _ELEMENTWISE[kind](x)
    raise ValueError(f"unknown elementwise kind {kind!r}")


# ---------------------------------------------------------------------------
# shape and reduction
# ---------------------------------------------------------------------------

def tsum(x, axis=None):
    x = as_tensor(x)

    def backward(g):
        if axis is None:
            x._accum(np.broadcast_to(g, x.shape))
        else:
            x._accum(np.broadcast_to(np.expand_dims(g, axis), x.shape))

    return _result(x.data.sum(axis=axis), (x,), backward, "sum")


def tmean(x, axis=None):
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return scale(tsum(x, axis), 1.0 / n)


def reshape(x, shape):
    x = as_tensor(x)
    return _result(x.data.reshape(shape), (x,), lambda g: x._accum(g.reshape(x.shape)), "reshape")


def transpose(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(x.data.transpose(axes), (x,), lambda g: x._accum(g.transpose(inverse)), "transpose")


def getitem(x, idx):
    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        x._accum(full)

    return _result(x.data[idx], (x,), backward, "getitem")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        for i, t in enumerate(tensors):
            t._accum(np.take(g, i, axis=axis))

    return _result(np.stack([t.data for t in tensors], axis=axis), tensors, backward, "stack")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            t._accum(np.take(g, np.arange(lo, hi), axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


# ---------------------------------------------------------------------------
# linear algebra and normalisation
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Matrix product; 3-d operands are batched over an equal leading axis."""
    a, b = as_tensor(a), as_tensor(b)
    ok = a.ndim == b.ndim and a.ndim in (2, 3) and a.shape[-1] == b.shape[-2]
    if ok and a.ndim == 3:
        ok = a.shape[0] == b.shape[0]
    if not ok:
        raise ValueError(f"matmul: shape mismatch {a.shape} x {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accum(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            b._accum(np.swapaxes(a.data, -1, -2) @ g)

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x._accum(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _result(out, (x,), backward, "softmax")


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def backward(g):
        x._accum(g - np.exp(out) * g.sum(axis=axis, keepdims=True))

    return _result(out, (x,), backward, "log_softmax")


def layernorm(x, gain, bias, eps=1e-5):
    """Normalise over the last axis with population variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"layernorm: gain {gain.shape} / bias {bias.shape} must be ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        gain._accum((g * xhat).sum(axis=lead))
        bias._accum(g.sum(axis=lead))
        if x.requires_grad:
            gh = g * gain.data
            x._accum(inv * (gh - gh.mean(axis=-1, keepdims=True)
                            - xhat * (gh * xhat).mean(axis=-1, keepdims=True)))

    return _result(xhat * gain.data + bias.data, (x, gain, bias), backward, "layernorm")


def mean_pool(x, valid_len=None):
    """Mean over the first ``valid_len`` frames of a [frames, dim] tensor."""
    x = as_tensor(x)
    frames = x.shape[0]
    n = frames if valid_len is None else int(valid_len)
    if not 1 <= n <= frames:
        raise ValueError(f"mean_pool: valid_len must be in [1, {frames}], got {n}")

    def backward(g):
        full = np.zeros_like(x.data)
        full[:n] = g / n
        x._accum(full)

    return _result(x.data[:n].mean(axis=0), (x,), backward, "mean_pool")


def conv1d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """Grouped 1-d convolution over a [frames, channels] tensor."""
    x, weight = as_tensor(x), as_tensor(weight)
    c_out, c_in_g, k = weight.shape
    if x.ndim != 2 or x.shape[1] != c_in_g * groups or c_out % groups:
        raise ValueError(f"conv1d: input {x.shape} incompatible with weight {weight.shape}, groups={groups}")
    xp = np.pad(x.data, ((padding, padding), (0, 0))) if padding else x.data
    if xp.shape[0] < k:
        raise ValueError(f"conv1d: {xp.shape[0]} frames is shorter than kernel {k}")
    out = _kernels.conv1d_forward(xp, weight.data, stride, groups)
    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    if bias is not None:
        out = out + parents[2].data

    def backward(g):
        gx, gw = _kernels.conv1d_backward(xp, weight.data, g, stride, groups)
        weight._accum(gw)
        if x.requires_grad:
            x._accum(gx[padding:padding + x.shape[0]])
        if bias is not None:
            parents[2]._accum(g.sum(axis=0))

    return _result(out, parents, backward, "conv1d")


def dropout(x, rate, rng, training):
    """Inverted dropout; identity outside training or at rate 0."""
    x = as_tensor(x)
    if not training or rate <= 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result(x.data * mask, (x,), lambda g: x._accum(g * mask), "dropout")


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def grad_check(f, x, h=1e-5, floor=1e-4):
    """Worst relative error between autodiff and central differences.

    ``f`` maps ``x`` to a scalar tensor.  Per coordinate the error is
    ``|a - n| / max(|a|, |n|, floor)``, so coordinates where both gradients
    vanish contribute their absolute difference scaled by ``1 / floor``.
    """
    x.data = np.ascontiguousarray(x.data)
    x.requires_grad = True
    x.grad = None
    y = f(x)
    if y.data.size != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {y.shape}")
    if y.requires_grad:
        y.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    numeric = np.empty_like(x.data)
    flat = x.data.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(x).data)
            flat[i] = orig - h
            fm = float(f(x).data)
            flat[i] = orig
            numeric.reshape(-1)[i] = (fp - fm) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if x.data.size else 0.0


# Every differentiable op, by name; the test suite checks each has a gradient case.
OPS = ("add", "sub", "mul", "div", "scale", "gelu", "tanh", "exp", "log", "clamp_min", "tsum", "tmean",
       "reshape", "transpose", "getitem", "stack", "concat", "matmul", "softmax", "log_softmax", "layernorm",
       "mean_pool", "conv1d", "dropout")

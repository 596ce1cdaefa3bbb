"""Reverse-mode differentiation over float64 NumPy arrays.

Every operation builds a fresh node; the tape is whatever graph hangs off the
loss, so it is rebuilt on each forward pass. ``backward`` walks it once in
reverse topological order.
"""

import contextlib

import numpy as np

from .. import kernels
from ..errors import ConfigError, ContractError, InvalidMaskError, ShapeError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (evaluation-only forward passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """Dense float64 array that may take part in gradient computation.

    ``grad`` is a same-shape buffer when ``requires_grad`` is set and ``None``
    otherwise. Calling :func:`backward` twice without :meth:`zero_grad`
    accumulates.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    """Wrap an op result; ``backward(g)`` returns one gradient (or None) per parent."""
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of NumPy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss):
    """Populate ``.grad`` of every tensor reachable from a scalar ``loss``."""
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        shape = getattr(loss, "shape", None)
        raise ContractError(f"backward() needs a scalar loss, got shape {shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor with requires_grad")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    local = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = local.pop(id(node), None)
        if g is None:
            continue
        node.grad += g
        if node._backward is None:
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in local:
                local[key] = local[key] + pg
            else:
                local[key] = pg


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _node(ad * bd, (a, b), bw)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        ga = _unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), bw)


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x):
    x = as_tensor(x)
    live = x.data > 0
    # np.maximum keeps NaN visible instead of mapping it to 0
    return _node(np.maximum(x.data, 0.0), (x,), lambda g: (g * live,))


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return _node(y, (x,), lambda g: (g * y,))


def log(x):
    x = as_tensor(x)
    xd = x.data
    return _node(np.log(xd), (x,), lambda g: (g / xd,))


def square(x):
    x = as_tensor(x)
    xd = x.data
    return _node(xd * xd, (x,), lambda g: (2.0 * g * xd,))


def clamp_min(x, floor):
    """max(x, floor); gradient passes only where x is above the floor."""
    x = as_tensor(x)
    live = x.data > floor
    return _node(np.where(live, x.data, floor), (x,), lambda g: (g * live,))


# ---------------------------------------------------------------------------
# reductions and shape
# ---------------------------------------------------------------------------

def sum_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    shape = x.shape
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(out, (x,), bw)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    if axis is None:
        n = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum_(x, axis, keepdims), 1.0 / n)


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def swapaxes(x, a1, a2):
    x = as_tensor(x)
    return _node(np.swapaxes(x.data, a1, a2), (x,), lambda g: (np.swapaxes(g, a1, a2),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(out, tuple(tensors), bw)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    return concat([reshape(t, np.expand_dims(t.data, axis).shape) for t in tensors], axis)


def take(x, indices, axis=0):
    """Gather slices of ``x`` along ``axis`` (repeated indices accumulate grads)."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    out = np.take(x.data, idx, axis=axis)

    if axis != 0 and idx.ndim != 1:
        raise ShapeError("take: multi-dimensional indices only supported on axis 0")

    def bw(g):
        gx = np.zeros_like(x.data)
        if axis == 0:
            np.add.at(gx, idx, g)
        else:
            np.add.at(np.moveaxis(gx, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (gx,)

    return _node(out, (x,), bw)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Matrix product; leading batch dimensions broadcast like ``np.matmul``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from exc
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), bw)


def conv1d_same(x, filters, bias):
    """Length-preserving 1-D convolution over the token axis.

    ``x`` is (l, d_in) or (B, l, d_in); ``filters`` is (w, d_in, d_out) with
    odd ``w``; the sequence is zero-padded by (w - 1) / 2 on each side.
    """
    x, filters, bias = as_tensor(x), as_tensor(filters), as_tensor(bias)
    w = filters.shape[0]
    if filters.ndim != 3 or w % 2 == 0:
        raise ConfigError(f"conv1d_same needs an odd window, got filters {filters.shape}")
    single = x.ndim == 2
    xd = x.data[None] if single else x.data
    if xd.ndim != 3 or xd.shape[2] != filters.shape[1] or bias.shape != (filters.shape[2],):
        raise ShapeError(
            f"conv1d_same: input {x.shape}, filters {filters.shape}, bias {bias.shape}"
        )
    if xd.shape[1] < 1:
        raise ShapeError("conv1d_same: empty sequence")
    out = kernels.conv1d_same_forward(xd, filters.data, bias.data)

    def bw(g):
        gx, gw, gb = kernels.conv1d_same_backward(g[None] if single else g, xd, filters.data)
        return (gx[0] if single else gx), gw, gb

    return _node(out[0] if single else out, (x, filters, bias), bw)


# ---------------------------------------------------------------------------
# normalisation and geometry
# ---------------------------------------------------------------------------

def softmax(x, mask=None):
    """Softmax over the last axis, max-subtracted.

    ``mask`` (boolean, broadcastable to ``x``) marks live positions; masked
    positions come out exactly 0.
    """
    x = as_tensor(x)
    shape = x.shape
    flat = x.data.reshape(-1, shape[-1])
    if mask is None:
        m = np.ones(flat.shape, dtype=bool)
    else:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), shape).reshape(flat.shape)
        if not m.any(axis=1).all():
            raise InvalidMaskError("softmax: every position of a row is masked")
    y = kernels.masked_softmax_forward(flat, m)

    def bw(g):
        return (kernels.masked_softmax_backward(y, g.reshape(y.shape)).reshape(shape),)

    return _node(y.reshape(shape), (x,), bw)


NORM_FLOOR = 1e-12


def cosine(u, v, axis=-1):
    """Cosine similarity along ``axis`` (operands broadcast).

    Defined as 0, with zero gradient, wherever either norm is below 1e-12.
    """
    u, v = as_tensor(u), as_tensor(v)
    if u.shape[axis] != v.shape[axis]:
        raise ShapeError(f"cosine: dimension mismatch {u.shape} vs {v.shape}")
    ud, vd = np.broadcast_arrays(u.data, v.data)
    nu = np.sqrt((ud * ud).sum(axis=axis, keepdims=True))
    nv = np.sqrt((vd * vd).sum(axis=axis, keepdims=True))
    ok = (nu >= NORM_FLOOR) & (nv >= NORM_FLOOR)
    nu_s = np.where(ok, nu, 1.0)
    nv_s = np.where(ok, nv, 1.0)
    dot = (ud * vd).sum(axis=axis, keepdims=True)
    c = np.where(ok, dot / (nu_s * nv_s), 0.0)
    c = np.clip(c, -1.0, 1.0)
    out = np.squeeze(c, axis=axis)

    def bw(g):
        g = np.expand_dims(g, axis) * ok
        gu = gv = None
        if u.requires_grad:
            gu = _unbroadcast(g * (vd / (nu_s * nv_s) - c * ud / (nu_s * nu_s)), u.shape)
        if v.requires_grad:
            gv = _unbroadcast(g * (ud / (nu_s * nv_s) - c * vd / (nv_s * nv_s)), v.shape)
        return gu, gv

    return _node(out, (u, v), bw)


def normalize(x, axis=-1):
    """Scale to unit L2 norm along ``axis``; rows with norm < 1e-12 map to 0."""
    x = as_tensor(x)
    xd = x.data
    n = np.sqrt((xd * xd).sum(axis=axis, keepdims=True))
    ok = n >= NORM_FLOOR
    ns = np.where(ok, n, 1.0)
    y = np.where(ok, xd / ns, 0.0)

    def bw(g):
        return (ok * (g - y * (g * y).sum(axis=axis, keepdims=True)) / ns,)

    return _node(y, (x,), bw)


def euclidean_distance(a, b, axis=-1):
    """L2 distance along ``axis`` (operands broadcast); zero distance has zero gradient."""
    a, b = as_tensor(a), as_tensor(b)
    diff = a.data - b.data
    d = np.sqrt((diff * diff).sum(axis=axis))
    safe = np.where(d > 0, d, 1.0)

    def bw(g):
        gd = np.expand_dims(np.where(d > 0, g / safe, 0.0), axis) * diff
        ga = _unbroadcast(gd, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-gd, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(d, (a, b), bw)

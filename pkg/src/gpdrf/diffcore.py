"""Reverse-mode differentiation over dense float64 arrays.

A :class:`Tensor` records the primitive that produced it and the
vector-Jacobian product needed to push a gradient back to its inputs.
Nodes are numbered at creation, so creation order is a topological
order; :class:`Tape` recovers the sub-graph reachable from an output and
replays it in reverse.

Only the primitives the model needs are provided.  Higher-order
derivatives are not supported (vjps operate on raw arrays).
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import solve_triangular as _sp_solve_triangular

from .errors import NotPositiveDefiniteError, ShapeError

_counter = itertools.count()


class Tensor:
    __slots__ = ("value", "parents", "vjp", "requires_grad", "order", "name", "op")

    __array_priority__ = 100.0

    def __init__(self, value, parents=(), vjp=None, requires_grad=False, name=None, op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        live = tuple(p for p in parents if p.requires_grad)
        if live:
            self.parents = tuple(parents)
            self.vjp = vjp
            self.requires_grad = True
        else:
            # nothing upstream needs a gradient: fold into a constant
            self.parents = ()
            self.vjp = None
            self.requires_grad = requires_grad
        self.order = next(_counter)
        self.name = name
        self.op = op

    # -- array-like conveniences -------------------------------------------------
    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def item(self):
        return float(self.value)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(op={self.op}{tag}, shape={self.shape})"

    def __len__(self):
        return len(self.value)

    # -- operators ---------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)

    @property
    def mT(self):
        return swap_last(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def param(value, name=None):
    """Create a trainable leaf."""
    return Tensor(np.array(value, dtype=np.float64, copy=True), requires_grad=True, name=name)


def const(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _val(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _make(value, parents, vjp, op):
    return Tensor(value, parents=parents, vjp=vjp, op=op)


# -- elementwise binary ------------------------------------------------------------

def add(a, b):
    a, b = const(a), const(b)
    return _make(a.value + b.value, (a, b), lambda g: (g, g), "add")


def sub(a, b):
    a, b = const(a), const(b)
    return _make(a.value - b.value, (a, b), lambda g: (g, -g), "sub")


def mul(a, b):
    a, b = const(a), const(b)
    av, bv = a.value, b.value
    return _make(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def div(a, b):
    a, b = const(a), const(b)
    av, bv = a.value, b.value
    out = av / bv
    return _make(out, (a, b), lambda g: (g / bv, -g * out / bv), "div")


def neg(a):
    a = const(a)
    return _make(-a.value, (a,), lambda g: (-g,), "neg")


def power(a, p):
    """``a ** p`` for a constant real exponent."""
    a = const(a)
    p = float(p)
    av = a.value
    if p == 2.0:
        return _make(av * av, (a,), lambda g: (2.0 * g * av,), "square")
    return _make(av ** p, (a,), lambda g: (g * p * av ** (p - 1.0),), "pow")


def square(a):
    return power(a, 2.0)


# -- elementwise unary -------------------------------------------------------------

def exp(a):
    a = const(a)
    out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    a = const(a)
    av = a.value
    return _make(np.log(av), (a,), lambda g: (g / av,), "log")


def cos(a):
    a = const(a)
    av = a.value
    return _make(np.cos(av), (a,), lambda g: (-g * np.sin(av),), "cos")


def sin(a):
    a = const(a)
    av = a.value
    return _make(np.sin(av), (a,), lambda g: (g * np.cos(av),), "sin")


def sqrt(a):
    """Square root; the gradient is taken as 0 where the input is exactly 0."""
    a = const(a)
    out = np.sqrt(a.value)

    def vjp(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(out > 0.0, 0.5 / out, 0.0)
        return (g * d,)

    return _make(out, (a,), vjp, "sqrt")


def clamp_min(a, floor=0.0):
    a = const(a)
    mask = a.value > floor
    return _make(np.where(mask, a.value, floor), (a,), lambda g: (g * mask,), "clamp")


# -- reductions and shape ----------------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = const(a)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(a.value.sum(axis=axis, keepdims=keepdims), (a,), vjp, "sum")


def mean(a, axis=None):
    a = const(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis=axis) / float(n)


def reshape(a, shape):
    a = const(a)
    old = a.shape
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None):
    a = const(a)
    inv = None if axes is None else tuple(np.argsort(axes))
    return _make(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def swap_last(a):
    a = const(a)
    return _make(np.swapaxes(a.value, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),), "swap")


def broadcast_to(a, shape):
    a = const(a)
    old = a.shape
    return _make(np.broadcast_to(a.value, shape).copy(), (a,), lambda g: (unbroadcast(g, old),), "broadcast")


def getitem(a, idx):
    a = const(a)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _make(a.value[idx], (a,), vjp, "getitem")


def stack(tensors, axis=0):
    ts = [const(t) for t in tensors]

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return _make(np.stack([t.value for t in ts], axis=axis), tuple(ts), vjp, "stack")


def diagonal(a):
    """Diagonal of the last two axes."""
    a = const(a)
    shape = a.shape
    n = shape[-1]

    def vjp(g):
        out = np.zeros(shape)
        idx = np.arange(n)
        out[..., idx, idx] = g
        return (out,)

    return _make(np.diagonal(a.value, axis1=-2, axis2=-1).copy(), (a,), vjp, "diagonal")


def logsumexp(a, axis=-1):
    a = const(a)
    av = a.value
    m = np.max(av, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.exp(av - m), axis=axis, keepdims=True)
    out = np.log(s) + m

    def vjp(g):
        soft = np.exp(av - out)
        return (np.expand_dims(g, axis) * soft,)

    return _make(np.squeeze(out, axis=axis), (a,), vjp, "logsumexp")


# -- linear algebra ----------------------------------------------------------------

def matmul(a, b):
    a, b = const(a), const(b)
    if a.ndim == 1:
        return reshape(matmul(reshape(a, (1, a.shape[0])), b), b.shape[:-2] + (b.shape[-1],))
    if b.ndim == 1:
        return reshape(matmul(a, reshape(b, (b.shape[0], 1))), a.shape[:-1])
    av, bv = a.value, b.value
    try:
        out = np.matmul(av, bv)
    except ValueError as exc:
        raise ShapeError(f"matmul shape mismatch {av.shape} @ {bv.shape}") from exc

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(bv, -1, -2))
        gb = np.matmul(np.swapaxes(av, -1, -2), g)
        return unbroadcast(ga, av.shape), unbroadcast(gb, bv.shape)

    return _make(out, (a, b), vjp, "matmul")


def _phi(x):
    """Lower triangle with the diagonal halved."""
    out = np.tril(x)
    n = x.shape[-1]
    idx = np.arange(n)
    out[..., idx, idx] *= 0.5
    return out


def _trisolve(L, B, trans=False):
    """Solve L X = B (or L^T X = B) for lower-triangular L, batched over leading axes."""
    L = np.asarray(L)
    B = np.asarray(B)
    lead = np.broadcast_shapes(L.shape[:-2], B.shape[:-2])
    Lb = np.broadcast_to(L, lead + L.shape[-2:])
    Bb = np.broadcast_to(B, lead + B.shape[-2:])
    if not lead:
        return _sp_solve_triangular(Lb, Bb, lower=True, trans=1 if trans else 0, check_finite=False)
    out = np.empty(lead + B.shape[-2:])
    for i in np.ndindex(*lead):
        out[i] = _sp_solve_triangular(Lb[i], Bb[i], lower=True, trans=1 if trans else 0, check_finite=False)
    return out


def cholesky_value(A):
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError() from exc


def cholesky(a):
    """Lower Cholesky factor of a symmetric positive-definite (batched) matrix.

    The returned gradient is the symmetric one, i.e. valid for symmetric
    perturbations of the input.
    """
    a = const(a)
    L = cholesky_value(a.value)

    def vjp(g):
        P = _phi(np.matmul(np.swapaxes(L, -1, -2), g))
        # S = L^{-T} P L^{-1}
        X = _trisolve(L, np.swapaxes(P, -1, -2), trans=True)  # L^{-T} P^T
        S = _trisolve(L, np.swapaxes(X, -1, -2), trans=True)  # L^{-T} (L^{-T} P^T)^T = L^{-T} P L^{-1}
        S = np.swapaxes(S, -1, -2)
        return (0.5 * (S + np.swapaxes(S, -1, -2)),)

    return _make(L, (a,), vjp, "cholesky")


def solve_triangular(L, b):
    """X with L X = b for lower-triangular (batched) L."""
    L, b = const(L), const(b)
    Lv, bv = L.value, b.value
    vec = bv.ndim == 1
    B2 = bv[:, None] if vec else bv
    X = _trisolve(Lv, B2)

    def vjp(g):
        G = g[:, None] if vec else g
        gb = _trisolve(Lv, G, trans=True)
        gL = -np.tril(np.matmul(gb, np.swapaxes(X, -1, -2)))
        gb_out = gb[:, 0] if vec else unbroadcast(gb, bv.shape)
        return unbroadcast(gL, Lv.shape), gb_out

    return _make(X[:, 0] if vec else X, (L, b), vjp, "trisolve")


def cho_solve(L, b):
    """X with (L L^T) X = b, via two triangular solves."""
    y = solve_triangular(L, b)
    return solve_triangular_t(L, y)


def solve_triangular_t(L, b):
    """X with L^T X = b for lower-triangular L."""
    L, b = const(L), const(b)
    Lv, bv = L.value, b.value
    vec = bv.ndim == 1
    B2 = bv[:, None] if vec else bv
    X = _trisolve(Lv, B2, trans=True)

    def vjp(g):
        G = g[:, None] if vec else g
        gb = _trisolve(Lv, G)
        gL = -np.tril(np.matmul(X, np.swapaxes(gb, -1, -2)))
        gb_out = gb[:, 0] if vec else unbroadcast(gb, bv.shape)
        return unbroadcast(gL, Lv.shape), gb_out

    return _make(X[:, 0] if vec else X, (L, b), vjp, "trisolve_t")


# -- backward pass -----------------------------------------------------------------

class Tape:
    """The recorded sub-graph feeding one output, in topological order."""

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output):
        seen = {}
        stack = [output]
        while stack:
            node = stack.pop()
            if id(node) in seen or not node.requires_grad:
                continue
            seen[id(node)] = node
            stack.extend(node.parents)
        return cls(sorted(seen.values(), key=lambda n: n.order))

    def backward(self, output, seed=None):
        grads = {id(output): np.ones_like(output.value) if seed is None else np.asarray(seed, dtype=np.float64)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None) if node.parents else grads.get(id(node))
            if g is None or not node.parents:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = unbroadcast(np.asarray(pg, dtype=np.float64), parent.shape)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        return grads


def grad(output, params):
    """Gradient of a scalar ``output`` with respect to each leaf in ``params``.

    ``params`` may be a dict (name -> leaf) or a sequence of leaves; the
    result mirrors its structure.  Unreachable leaves get zero gradients.
    """
    if not isinstance(output, Tensor) or output.value.size != 1:
        shape = getattr(output, "shape", None)
        raise ShapeError(f"grad needs a scalar output, got shape {shape}")
    items = list(params.items()) if isinstance(params, dict) else list(enumerate(params))
    for _, p in items:
        if p.parents:
            raise ShapeError("grad params must be leaves")
    tape = Tape.from_output(output)
    grads = tape.backward(output)
    result = [(k, np.array(grads.get(id(p), np.zeros_like(p.value)), dtype=np.float64).reshape(p.shape))
              for k, p in items]
    if isinstance(params, dict):
        return dict(result)
    return [g for _, g in result]

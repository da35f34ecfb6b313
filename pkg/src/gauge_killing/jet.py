"""First-order jet (dual number) arithmetic over numpy arrays.

A :class:`Jet` carries a value together with one directional derivative.
Values can be arrays of any shape; leading axes are normally sample batches.
Jets nest: the value and derivative of a jet may themselves be jets carrying
an older tag, which is how second derivatives come out of two nested
:func:`derivative` calls.

Every jet has an integer tag. When jets with different tags meet in an
operation the one with the larger (younger) tag is the outer one and the
other is treated as a constant, so closures that capture an outer jet do not
confuse perturbations.
"""

from __future__ import annotations

import itertools

import numpy as np

_tags = itertools.count(1)


def _tag(x):
    return x.tag if isinstance(x, Jet) else 0


def shape(x):
    return x.shape if isinstance(x, Jet) else np.shape(x)


def _parts(x, tag):
    if isinstance(x, Jet) and x.tag == tag:
        return x.val, x.dot
    return x, None


def _make(val, dot, tag):
    if dot is None:
        dot = np.zeros(shape(val))
    elif shape(dot) != shape(val):
        dot = dot + np.zeros(shape(val))
    return Jet(val, dot, tag)


def _plus(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


class Jet:
    """Value plus one tangent, ``val + dot * eps`` with ``eps**2 = 0``."""

    __slots__ = ("val", "dot", "tag")
    __array_ufunc__ = None

    def __init__(self, val, dot, tag):
        self.val = val
        self.dot = dot
        self.tag = tag

    @property
    def shape(self):
        return shape(self.val)

    @property
    def ndim(self):
        return len(self.shape)

    def __repr__(self):
        return f"Jet(val={self.val!r}, dot={self.dot!r}, tag={self.tag})"

    def __getitem__(self, idx):
        return Jet(self.val[idx], self.dot[idx], self.tag)

    def __neg__(self):
        return Jet(-self.val, -self.dot, self.tag)

    def __pos__(self):
        return self

    def __add__(self, other):
        tag = max(self.tag, _tag(other))
        a0, a1 = _parts(self, tag)
        b0, b1 = _parts(other, tag)
        return _make(a0 + b0, _plus(a1, b1), tag)

    __radd__ = __add__

    def __sub__(self, other):
        tag = max(self.tag, _tag(other))
        a0, a1 = _parts(self, tag)
        b0, b1 = _parts(other, tag)
        return _make(a0 - b0, _plus(a1, None if b1 is None else -b1), tag)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        tag = max(self.tag, _tag(other))
        a0, a1 = _parts(self, tag)
        b0, b1 = _parts(other, tag)
        dot = _plus(None if b1 is None else a0 * b1, None if a1 is None else a1 * b0)
        return _make(a0 * b0, dot, tag)

    __rmul__ = __mul__

    def __truediv__(self, other):
        tag = max(self.tag, _tag(other))
        a0, a1 = _parts(self, tag)
        b0, b1 = _parts(other, tag)
        val = a0 / b0
        dot = _plus(None if a1 is None else a1 / b0, None if b1 is None else -(val * b1) / b0)
        return _make(val, dot, tag)

    def __rtruediv__(self, other):
        # other is not a jet of this tag
        inv = 1.0 / self.val
        return Jet(other * inv, -(other * inv * inv) * self.dot, self.tag)

    def __pow__(self, p):
        if isinstance(p, Jet):
            raise TypeError("jet exponents are not supported")
        if p == 2:
            return self * self
        return Jet(self.val**p, p * self.val ** (p - 1) * self.dot, self.tag)

    def __matmul__(self, other):
        tag = max(self.tag, _tag(other))
        a0, a1 = _parts(self, tag)
        b0, b1 = _parts(other, tag)
        dot = _plus(None if b1 is None else a0 @ b1, None if a1 is None else a1 @ b0)
        return _make(a0 @ b0, dot, tag)

    def __rmatmul__(self, other):
        tag = self.tag
        b0, b1 = self.val, self.dot
        return _make(other @ b0, other @ b1, tag)


# -- elementwise functions ---------------------------------------------------


def sin(x):
    if isinstance(x, Jet):
        return Jet(sin(x.val), cos(x.val) * x.dot, x.tag)
    return np.sin(x)


def cos(x):
    if isinstance(x, Jet):
        return Jet(cos(x.val), -sin(x.val) * x.dot, x.tag)
    return np.cos(x)


def exp(x):
    if isinstance(x, Jet):
        e = exp(x.val)
        return Jet(e, e * x.dot, x.tag)
    return np.exp(x)


def log(x):
    if isinstance(x, Jet):
        return Jet(log(x.val), x.dot / x.val, x.tag)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Jet):
        s = sqrt(x.val)
        return Jet(s, x.dot / (2.0 * s), x.tag)
    return np.sqrt(x)


def tan(x):
    return sin(x) / cos(x)


# -- structural operations ---------------------------------------------------


def _max_tag(items):
    return max((_tag(i) for i in items), default=0)


def stack(items, axis=0):
    """``np.stack`` over jets, broadcasting items to a common shape."""
    items = list(items)
    common = np.broadcast_shapes(*(shape(i) for i in items))
    items = [i if shape(i) == common else i + np.zeros(common) for i in items]
    tag = _max_tag(items)
    if tag == 0:
        return np.stack(items, axis=axis)
    vals, dots = [], []
    for i in items:
        v, d = _parts(i, tag)
        vals.append(v)
        dots.append(np.zeros(common) if d is None else d)
    return Jet(stack(vals, axis), stack(dots, axis), tag)


def concatenate(items, axis=0):
    items = list(items)
    tag = _max_tag(items)
    if tag == 0:
        return np.concatenate(items, axis=axis)
    vals, dots = [], []
    for i in items:
        v, d = _parts(i, tag)
        vals.append(v)
        dots.append(np.zeros(shape(v)) if d is None else d)
    return Jet(concatenate(vals, axis), concatenate(dots, axis), tag)


def einsum(subscripts, *operands):
    """Multilinear ``np.einsum``; the tangent follows the product rule."""
    tag = _max_tag(operands)
    if tag == 0:
        return np.einsum(subscripts, *operands)
    parts = [_parts(o, tag) for o in operands]
    vals = [p[0] for p in parts]
    val = einsum(subscripts, *vals)
    dot = None
    for i, (_, d) in enumerate(parts):
        if d is None:
            continue
        args = vals[:i] + [d] + vals[i + 1 :]
        dot = _plus(dot, einsum(subscripts, *args))
    return _make(val, dot, tag)


def swapaxes(x, a1, a2):
    if isinstance(x, Jet):
        return Jet(swapaxes(x.val, a1, a2), swapaxes(x.dot, a1, a2), x.tag)
    return np.swapaxes(x, a1, a2)


def transpose(x):
    """Swap the last two axes (matrix transpose over a batch)."""
    return swapaxes(x, -1, -2)


def expand_dims(x, axis):
    if isinstance(x, Jet):
        return Jet(expand_dims(x.val, axis), expand_dims(x.dot, axis), x.tag)
    return np.expand_dims(x, axis)


def sum(x, axis=None):  # noqa: A001
    if isinstance(x, Jet):
        return Jet(sum(x.val, axis), sum(x.dot, axis), x.tag)
    return np.sum(x, axis=axis)


def inv(m):
    """Batched matrix inverse."""
    if isinstance(m, Jet):
        mi = inv(m.val)
        return Jet(mi, -(mi @ m.dot @ mi), m.tag)
    return np.linalg.inv(m)


def _expm_plain(a):
    a = np.asarray(a, dtype=float)
    norm = float(np.max(np.abs(a).sum(axis=-1))) if a.size else 0.0
    s = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    b = a / 2.0**s
    eye = np.broadcast_to(np.eye(a.shape[-1]), a.shape)
    term = eye.copy()
    out = eye.copy()
    for j in range(1, 19):
        term = term @ b / j
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def expm(a):
    """Matrix exponential by scaling and squaring with an order-18 Taylor sum.

    For a jet the derivative is read off the exponential of the block matrix
    ``[[A, dA], [0, A]]``, whose upper-right block is the Frechet derivative.
    """
    if isinstance(a, Jet):
        m = a.shape[-1]
        zero = np.zeros(a.shape)
        top = concatenate([a.val, a.dot], axis=-1)
        bottom = concatenate([zero, a.val], axis=-1)
        e = expm(concatenate([top, bottom], axis=-2))
        return Jet(e[..., :m, :m], e[..., :m, m:], a.tag)
    return _expm_plain(a)


# -- differentiation ---------------------------------------------------------


def primal(x):
    """Strip every jet layer and return the plain numpy value."""
    while isinstance(x, Jet):
        x = x.val
    return x


def _split_out(out, tag):
    if isinstance(out, Jet):
        if out.tag == tag:
            return out.val, out.dot
        return out, 0.0 * out
    if isinstance(out, tuple):
        pairs = [_split_out(o, tag) for o in out]
        vals = [p[0] for p in pairs]
        dots = [p[1] for p in pairs]
        if hasattr(out, "_fields"):
            return type(out)(*vals), type(out)(*dots)
        return tuple(vals), tuple(dots)
    if isinstance(out, list):
        pairs = [_split_out(o, tag) for o in out]
        return [p[0] for p in pairs], [p[1] for p in pairs]
    out = np.asarray(out, dtype=float)
    return out, np.zeros_like(out)


def jvp(f, primals, tangents):
    """Evaluate ``f(*primals)`` and its derivative along ``tangents``.

    Returns ``(value, derivative)`` with the same structure as the output of
    ``f`` (arrays, jets of older tags, tuples or named tuples of those).
    """
    tag = next(_tags)
    args = [Jet(p, t if shape(t) == shape(p) else t + np.zeros(shape(p)), tag) for p, t in zip(primals, tangents)]
    return _split_out(f(*args), tag)


def derivative(f, x, v):
    """Exact directional derivative ``d/dt f(x + t v)`` at ``t = 0``."""
    return jvp(f, (x,), (v,))[1]


def jacobian(f, x):
    """Jacobian of ``f`` at a batch of points ``x`` of shape ``(..., n)``.

    The differentiation index is appended as the last axis of the output.
    """
    n = shape(x)[-1]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(derivative(f, x, np.broadcast_to(e, shape(x))))
    return stack(cols, axis=-1)

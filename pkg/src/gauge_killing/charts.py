"""Coordinate charts, fields over them, and first-order calculus.

Fields are plain callables on chart coordinates following array conventions
(a batch of points has shape ``(..., n)``):

* scalar field ``f(x) -> (...)``
* vector field ``X(x) -> (..., n)``
* one-form ``eta(x) -> (..., n)`` or algebra-valued ``(..., n, d)`` where
  ``eta[..., i, :]`` is ``eta(e_i)``
* metric ``g(x) -> (..., n, n)``

Every field must be written with :mod:`gauge_killing.jet` functions so that it
can be evaluated on jets; derivatives below are exact, not differenced.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import jet
from .errors import ChartMismatchError, DomainError, InvalidArgumentError


@dataclass(frozen=True)
class Chart:
    """An open axis-aligned box in R^n with a seeded interior sampler."""

    name: str
    lower: tuple
    upper: tuple
    margin: float = 0.05

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi <= lo):
            raise InvalidArgumentError(f"chart {self.name!r} has an empty domain")
        object.__setattr__(self, "lower", tuple(lo))
        object.__setattr__(self, "upper", tuple(hi))

    @property
    def dim(self):
        return len(self.lower)

    def contains(self, x):
        x = np.asarray(jet.primal(x))
        return np.all((x > np.asarray(self.lower)) & (x < np.asarray(self.upper)), axis=-1)

    def require(self, x):
        inside = self.contains(x)
        if not np.all(inside):
            bad = np.asarray(jet.primal(x)).reshape(-1, self.dim)[~np.ravel(inside)][0]
            raise DomainError(f"point {bad} lies outside chart {self.name!r}")

    def sample(self, n, rng):
        """``n`` points in the interior shrunk by ``margin`` on every side."""
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        pad = self.margin * (hi - lo)
        return rng.uniform(lo + pad, hi - pad, size=(n, self.dim))

    def restrict(self, lower, upper, margin=None):
        return replace(self, lower=tuple(lower), upper=tuple(upper), margin=self.margin if margin is None else margin)


@dataclass(frozen=True)
class ChartTransition:
    """Coordinate change from ``source`` to ``target`` on their overlap.

    ``sampler(n, rng)`` returns overlap points in source coordinates.
    """

    source: str
    target: str
    forward: Callable
    inverse: Callable
    sampler: Callable
    description: str = ""

    def sample(self, n, rng):
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        return self.sampler(n, rng)


class ChartFamily:
    """One callable per chart, e.g. a vector field or a section."""

    def __init__(self, reps, name=""):
        self.reps = dict(reps)
        self.name = name

    @property
    def charts(self):
        return tuple(self.reps)

    def on(self, chart):
        try:
            return self.reps[chart]
        except KeyError:
            raise ChartMismatchError(f"{self.name or type(self).__name__} has no representation on chart {chart!r}") from None

    def __call__(self, chart, x):
        return self.on(chart)(x)

    def _combine(self, other, op, name):
        charts = [c for c in self.reps if c in other.reps]
        reps = {c: (lambda x, f=self.reps[c], g=other.reps[c]: op(f(x), g(x))) for c in charts}
        return type(self)(reps, name)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b, f"{self.name}+{other.name}")

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b, f"{self.name}-{other.name}")

    def __rmul__(self, s):
        return type(self)({c: (lambda x, f=f: s * f(x)) for c, f in self.reps.items()}, f"{s}*{self.name}")

    def __neg__(self):
        return (-1.0) * self


class VectorField(ChartFamily):
    """A vector field on the base, ``X(x) -> (..., n)`` per chart."""


class ScalarField(ChartFamily):
    pass


@dataclass(eq=False)
class BaseManifold:
    """An atlas with transitions, a Riemannian metric, and named fields.

    ``killing`` lists the names in ``fields`` that are Killing for ``metric``.
    """

    name: str
    charts: dict
    transitions: dict
    metric: dict
    fields: dict = field(default_factory=dict)
    functions: dict = field(default_factory=dict)
    killing: tuple = ()

    @property
    def dim(self):
        return next(iter(self.charts.values())).dim

    def transition(self, source, target):
        try:
            return self.transitions[(source, target)]
        except KeyError:
            raise ChartMismatchError(f"charts {source!r} and {target!r} do not overlap") from None

    def metric_on(self, chart):
        try:
            return self.metric[chart]
        except KeyError:
            raise ChartMismatchError(f"no metric on chart {chart!r}") from None


# -- calculus ----------------------------------------------------------------


def directional_derivative(f, x, v, chart=None):
    """``d/dt f(x + t v)`` at ``t = 0`` through jet arithmetic."""
    if chart is not None:
        chart.require(x)
    return jet.derivative(f, x, v)


def lie_bracket_base(X1, X2, x, chart=None):
    """``[X1, X2] = DX2 . X1 - DX1 . X2`` at ``x``."""
    if chart is not None:
        chart.require(x)
    return jet.derivative(X2, x, X1(x)) - jet.derivative(X1, x, X2(x))


def _pair(eta_x, v):
    # eta_x[..., i] or eta_x[..., i, a] contracted with v[..., i]
    if len(jet.shape(eta_x)) == len(jet.shape(v)):
        return jet.einsum("...i,...i->...", eta_x, v)
    return jet.einsum("...ia,...i->...a", eta_x, v)


def exterior_derivative_oneform(eta, x, v, w, chart=None):
    """``d eta(v, w)`` with constant extensions of ``v`` and ``w``."""
    if chart is not None:
        chart.require(x)
    return jet.derivative(lambda y: _pair(eta(y), w), x, v) - jet.derivative(lambda y: _pair(eta(y), v), x, w)


def lie_derivative_metric_base(X, g, x, v, w, chart=None):
    """``(L_X g)(v, w) = X g(v, w) + g(DX v, w) + g(v, DX w)``.

    The last two terms are ``-g([X, V], W) - g(V, [X, W])`` for constant
    coordinate fields ``V``, ``W``.
    """
    if chart is not None:
        chart.require(x)
    gx = g(x)
    dg = jet.derivative(g, x, X(x))
    dxv = jet.derivative(X, x, v)
    dxw = jet.derivative(X, x, w)
    bil = lambda m, a, b: jet.einsum("...i,...ij,...j->...", a, m, b)  # noqa: E731
    return bil(dg, v, w) + bil(gx, dxv, w) + bil(gx, v, dxw)


def lie_derivative_metric_matrix(X, g, x):
    """Full matrix of ``L_X g`` in the coordinate basis, ``(..., n, n)``."""
    gx = g(x)
    dg = jet.derivative(g, x, X(x))
    dX = jet.jacobian(X, x)
    return dg + jet.einsum("...ki,...kj->...ij", dX, gx) + jet.einsum("...ik,...kj->...ij", gx, dX)


def killing_residual_base(X, manifold, n_samples=200, seed=0, charts=None):
    """Max over samples of the largest entry of ``L_X g`` on every chart."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in charts or X.charts:
        chart = manifold.charts[name] if isinstance(name, str) else name
        x = chart.sample(n_samples, rng)
        m = lie_derivative_metric_matrix(X.on(chart.name), manifold.metric_on(chart.name), x)
        worst = max(worst, float(np.max(np.abs(m))))
    return worst


# -- built-in base manifolds -------------------------------------------------


def _euclidean(x):
    return np.broadcast_to(np.eye(jet.shape(x)[-1]), jet.shape(x) + (jet.shape(x)[-1],)) + 0.0 * jet.expand_dims(x, -1)


def euclidean_box(lower=(-1.0, -1.0), upper=(1.0, 1.0), name="box"):
    """A one-chart flat base with translations, rotation and dilation fields."""
    chart = Chart(name, tuple(lower), tuple(upper))
    n = chart.dim
    fields = {}
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        fields[f"trans-x{i + 1}"] = VectorField({name: (lambda x, e=e: e + 0.0 * x)}, f"trans-x{i + 1}")
    if n >= 2:
        fields["rot"] = VectorField({name: lambda x: _rotation12(x)}, "rot")
    fields["dilation"] = VectorField({name: lambda x: 1.0 * x}, "dilation")
    killing = tuple(k for k in fields if k != "dilation")
    return BaseManifold(f"euclidean-{name}", {name: chart}, {}, {name: _euclidean}, fields, {}, killing)


def _rotation12(x):
    comps = [-x[..., 1], x[..., 0]] + [0.0 * x[..., i] for i in range(2, jet.shape(x)[-1])]
    return jet.stack(comps, axis=-1)


# Round unit sphere covered by two stereographic charts. With z = x1 + i x2
# the north chart projects from the north pole and the south chart uses
# w = 1/z, an orientation-preserving rational transition.


def _sq(x):
    return x[..., 0] * x[..., 0] + x[..., 1] * x[..., 1]


def round_metric(x):
    conf = 4.0 / (1.0 + _sq(x)) ** 2
    eye = np.eye(2)
    return jet.einsum("...,ij->...ij", conf, eye)


def _invert(x):
    r2 = _sq(x)
    return jet.stack([x[..., 0] / r2, -x[..., 1] / r2], axis=-1)


def _complex_field(p, q):
    return jet.stack([p, q], axis=-1)


def _mul(a, b):
    # complex product of (re, im) pairs
    return a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0]


def _rot_z(sign):
    # V = i z (north) and V = -i w (south)
    return lambda x: _complex_field(-sign * x[..., 1], sign * x[..., 0])


def _rot_x(x):
    # V = (i/2)(1 - z^2), identical in both charts
    re, im = _mul((x[..., 0], x[..., 1]), (x[..., 0], x[..., 1]))
    return _complex_field(0.5 * im, 0.5 * (1.0 - re))


def _rot_y(sign):
    # V = sign (1/2)(1 + z^2): sign -1 on the north chart, +1 on the south
    def f(x):
        re, im = _mul((x[..., 0], x[..., 1]), (x[..., 0], x[..., 1]))
        return _complex_field(sign * 0.5 * (1.0 + re), sign * 0.5 * im)

    return f


def sphere_embedding(x, chart="north"):
    """Point of the unit sphere in R^3 for stereographic coordinates."""
    r2 = _sq(x)
    big_x = 2.0 * x[..., 0] / (1.0 + r2)
    big_y = 2.0 * x[..., 1] / (1.0 + r2)
    big_z = (r2 - 1.0) / (1.0 + r2)
    if chart == "south":
        return jet.stack([big_x, -big_y, -big_z], axis=-1)
    return jet.stack([big_x, big_y, big_z], axis=-1)


def _annulus_sampler(r_min, r_max):
    def sample(n, rng):
        r = np.sqrt(rng.uniform(r_min**2, r_max**2, size=n))
        t = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)

    return sample


def round_sphere(half_width=2.0):
    """Unit round S^2 with north/south stereographic charts.

    Named fields: ``rot-x``, ``rot-y``, ``rot-z`` (Killing) and ``dilation``
    (the conformal gradient of the height, not Killing). Named functions are
    the ambient coordinates ``X``, ``Y``, ``Z``.
    """
    w = half_width
    charts = {c: Chart(c, (-w, -w), (w, w)) for c in ("north", "south")}
    sampler = _annulus_sampler(1.0 / w + 1e-3, w - 1e-3)
    transitions = {
        ("north", "south"): ChartTransition("north", "south", _invert, _invert, sampler, "w = 1/z"),
        ("south", "north"): ChartTransition("south", "north", _invert, _invert, sampler, "z = 1/w"),
    }
    metric = {"north": round_metric, "south": round_metric}
    fields = {
        "rot-x": VectorField({"north": _rot_x, "south": _rot_x}, "rot-x"),
        "rot-y": VectorField({"north": _rot_y(-1.0), "south": _rot_y(1.0)}, "rot-y"),
        "rot-z": VectorField({"north": _rot_z(1.0), "south": _rot_z(-1.0)}, "rot-z"),
        "dilation": VectorField({"north": lambda x: 1.0 * x, "south": lambda x: -1.0 * x}, "dilation"),
    }
    functions = {
        name: ScalarField({c: (lambda x, c=c, i=i: sphere_embedding(x, c)[..., i]) for c in charts}, name)
        for i, name in enumerate("XYZ")
    }
    return BaseManifold("round-S2", charts, transitions, metric, fields, functions, ("rot-x", "rot-y", "rot-z"))

"""Principal bundles in local data and the vector fields living on them.

A point of the total space is written in a bundle chart as ``(x, k)`` with
``x`` base coordinates and ``k`` a group matrix. Tangent vectors are pairs
``(u, b)``: ``u`` is the base velocity and ``b`` the left-logarithmic
vertical velocity, i.e. ``dk/dt = k hat(b)``. With this choice the
fundamental field of ``a`` is exactly ``(0, a)`` and the connection form reads
``omega(u, b) = Ad_{k^-1} A(u) + b``.

Transition functions follow ``k_alpha = g_{alpha beta}(x) k_beta``, so that
``A_beta = Ad_{g^-1} A_alpha + g^-1 dg`` and sections glue as
``nu_beta = Ad_{g^-1} nu_alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import jet
from .charts import ChartFamily
from .errors import ChartMismatchError, ModelInvalidError


class TotalTangent(NamedTuple):
    u: object
    b: object

    def __add__(self, other):
        return TotalTangent(self.u + other.u, self.b + other.b)

    def __sub__(self, other):
        return TotalTangent(self.u - other.u, self.b - other.b)

    def __neg__(self):
        return TotalTangent(-self.u, -self.b)

    def __mul__(self, s):
        return TotalTangent(s * self.u, s * self.b)

    __rmul__ = __mul__

    def stacked(self):
        """``(u, b)`` concatenated along the last axis."""
        return jet.concatenate([self.u, self.b], axis=-1)


class AdjointSection(ChartFamily):
    """A section of ad(P): ``nu_alpha(x) -> (..., d)`` per base chart."""


@dataclass(eq=False)
class PrincipalBundle:
    """Base manifold, structure group, transitions and local connection forms.

    ``connection[chart](x)`` has shape ``(..., n, d)``; row ``i`` holds the
    coefficients of ``A(e_i)``. ``transitions[(a, b)](x)`` is ``g_ab`` as a
    function of chart-``a`` coordinates.
    """

    name: str
    base: object
    group: object
    connection: dict
    transitions: dict = field(default_factory=dict)
    description: str = ""

    @property
    def dim(self):
        return self.base.dim

    @property
    def charts(self):
        return tuple(self.base.charts)

    def A(self, chart):
        try:
            return self.connection[chart]
        except KeyError:
            raise ChartMismatchError(f"no connection form on chart {chart!r}") from None

    def g(self, source, target):
        try:
            return self.transitions[(source, target)]
        except KeyError:
            raise ChartMismatchError(f"no transition from {source!r} to {target!r}") from None

    def sample(self, chart, n, rng, k_scale=np.pi):
        """``n`` bundle points ``(x, k)`` on ``chart`` with random fibre
        coordinates."""
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        ch = self.base.charts[chart] if isinstance(chart, str) else chart
        x = ch.sample(n, rng)
        k = self.group.random_element(rng, n, k_scale)
        return x, k


class TotalVectorField:
    """A vector field on the total space, one callable ``(x, k) ->
    TotalTangent`` per bundle chart."""

    def __init__(self, bundle, reps, name="", k_invariant=None, fiber_preserving=None):
        self.bundle = bundle
        self.reps = dict(reps)
        self.name = name
        self.k_invariant = k_invariant
        self.fiber_preserving = fiber_preserving

    @property
    def charts(self):
        return tuple(self.reps)

    def on(self, chart):
        try:
            return self.reps[chart]
        except KeyError:
            raise ChartMismatchError(f"field {self.name!r} has no representation on chart {chart!r}") from None

    def __call__(self, chart, x, k):
        return self.on(chart)(x, k)

    def _merge(self, other, sign, name):
        if other.bundle is not self.bundle:
            raise ChartMismatchError("fields live on different bundles")
        charts = [c for c in self.reps if c in other.reps]
        reps = {c: (lambda x, k, f=self.reps[c], g=other.reps[c]: f(x, k) + sign * g(x, k)) for c in charts}
        both = lambda p, q: p and q if p is not None and q is not None else None  # noqa: E731
        return TotalVectorField(self.bundle, reps, name, both(self.k_invariant, other.k_invariant), both(self.fiber_preserving, other.fiber_preserving))

    def __add__(self, other):
        return self._merge(other, 1.0, f"{self.name}+{other.name}")

    def __sub__(self, other):
        return self._merge(other, -1.0, f"{self.name}-{other.name}")

    def __rmul__(self, s):
        reps = {c: (lambda x, k, f=f: s * f(x, k)) for c, f in self.reps.items()}
        return TotalVectorField(self.bundle, reps, f"{s}*{self.name}", self.k_invariant, self.fiber_preserving)

    def __neg__(self):
        return (-1.0) * self


# -- local formulas ----------------------------------------------------------


def _apply_form(form_x, u):
    return jet.einsum("...ia,...i->...a", form_x, u)


def connection_form(bundle, chart, x, k, t):
    """``omega_A(t) = Ad_{k^-1} A(u) + b`` at the point ``(x, k)``."""
    grp = bundle.group
    return grp.Ad(grp.inverse(k), _apply_form(bundle.A(chart)(x), t.u)) + t.b


def curvature(bundle, chart, x, v=None, w=None):
    """Local curvature ``F = dA + [A, A]`` (the ``1/2 [A ^ A]`` term).

    Returns the full tensor ``(..., n, n, d)`` with ``F[..., i, j, :] =
    F(e_i, e_j)`` unless ``v`` and ``w`` are given.
    """
    A = bundle.A(chart)
    ax = A(x)
    dA = jet.jacobian(A, x)  # [..., i, a, j] = d_j A_i^a
    dA = jet.swapaxes(dA, -1, -2)  # [..., i, j, a] = d_j A_i^a
    f = jet.swapaxes(dA, -2, -3) - dA  # d_i A_j - d_j A_i
    grp = bundle.group
    f = f + jet.einsum("...ia,...jb,abc->...ijc", ax, ax, grp.structure_constants)
    if v is None:
        return f
    return jet.einsum("...ijc,...i,...j->...c", f, v, w)


def contract_curvature(F, X):
    """``iota_X F`` as an algebra-valued one-form ``(..., n, d)``."""
    return jet.einsum("...ijc,...i->...jc", F, X)


def covariant_derivative(bundle, nu, chart, x, v=None):
    """``nabla^A nu = d nu + [A, nu]``; full form ``(..., n, d)`` or along ``v``."""
    f = nu.on(chart) if isinstance(nu, ChartFamily) else nu
    dnu = jet.swapaxes(jet.jacobian(f, x), -1, -2)  # [..., i, a]
    ax = bundle.A(chart)(x)
    grp = bundle.group
    out = dnu + jet.einsum("...ia,...b,abc->...ic", ax, f(x), grp.structure_constants)
    if v is None:
        return out
    return _apply_form(out, v)


# -- fields on the total space -----------------------------------------------


def horizontal_lift(bundle, X):
    """Horizontal lift ``(X(x), -Ad_{k^-1} A(X(x)))`` of a base field."""
    grp = bundle.group

    def rep(chart):
        Xc = X.on(chart)
        A = bundle.A(chart)

        def f(x, k):
            u = Xc(x)
            return TotalTangent(u, -grp.Ad(grp.inverse(k), _apply_form(A(x), u)))

        return f

    charts = [c for c in X.charts if c in bundle.connection]
    return TotalVectorField(bundle, {c: rep(c) for c in charts}, f"lift({X.name})", True, True)


def vertical_field(bundle, nu):
    """``xi^nu = (0, Ad_{k^-1} nu(x))``."""
    grp = bundle.group

    def rep(chart):
        f = nu.on(chart)
        return lambda x, k: TotalTangent(0.0 * x, grp.Ad(grp.inverse(k), f(x)))

    return TotalVectorField(bundle, {c: rep(c) for c in nu.charts}, f"xi({nu.name})", True, True)


def fundamental_field(bundle, a):
    """``a^# = (0, a)`` in left-logarithmic coordinates."""
    a = np.asarray(a, dtype=float)

    def f(x, k):
        batch = jet.shape(x)[:-1]
        return TotalTangent(0.0 * x, np.broadcast_to(a, batch + a.shape[-1:]).copy())

    return TotalVectorField(bundle, {c: f for c in bundle.charts}, f"fund({np.round(a, 3).tolist()})", None, True)


def constant_field(bundle, t, name="const"):
    """The field with constant left-logarithmic coordinates ``t``."""
    u = np.asarray(t.u, dtype=float)
    b = np.asarray(t.b, dtype=float)
    return TotalVectorField(bundle, {c: (lambda x, k: TotalTangent(u + 0.0 * x, b + np.zeros(jet.shape(x)[:-1] + b.shape[-1:]))) for c in bundle.charts}, name)


# -- derivatives and brackets on the total space -----------------------------


def bundle_jvp(bundle, F, x, k, t):
    """Value and derivative of ``F(x, k)`` along the tangent ``t``."""
    return jet.jvp(F, (x, k), (t.u, k @ bundle.group.hat(t.b)))


def total_bracket(Y1, Y2, chart, x, k):
    """Lie bracket ``[Y1, Y2]`` at ``(x, k)`` in bundle-chart coordinates.

    Base part ``DY2.u [Y1] - DY1.u [Y2]``; vertical part
    ``[b1, b2] + Db2[Y1] - Db1[Y2]``. Derivatives along the fibre are taken
    along ``k exp(t c)`` by jets.
    """
    if Y1.bundle is not Y2.bundle:
        raise ChartMismatchError("fields live on different bundles")
    bundle = Y1.bundle
    f1, f2 = Y1.on(chart), Y2.on(chart)
    t1 = f1(x, k)
    t2 = f2(x, k)
    _, d2 = bundle_jvp(bundle, f2, x, k, t1)
    _, d1 = bundle_jvp(bundle, f1, x, k, t2)
    return TotalTangent(d2.u - d1.u, bundle.group.bracket(t1.b, t2.b) + d2.b - d1.b)


def bracket_field(Y1, Y2, name=None):
    """``[Y1, Y2]`` as a field (evaluated lazily, so it can be nested)."""
    charts = [c for c in Y1.charts if c in Y2.charts]
    reps = {c: (lambda x, k, c=c: total_bracket(Y1, Y2, c, x, k)) for c in charts}
    return TotalVectorField(Y1.bundle, reps, name or f"[{Y1.name},{Y2.name}]")


def right_translate(bundle, x, k, t, h):
    """``(R_h)_*`` of the tangent ``t`` at ``(x, k)``: lands at ``(x, k h)``."""
    grp = bundle.group
    return TotalTangent(t.u, grp.Ad(grp.inverse(h), t.b))


def change_chart(bundle, source, target, x, k, t=None):
    """Re-express a bundle point (and optionally a tangent) in ``target``."""
    trans = bundle.base.transition(source, target)
    gfun = bundle.g(source, target)
    grp = bundle.group

    def move(xx, kk):
        return trans.forward(xx), grp.inverse(gfun(xx)) @ kk

    if t is None:
        return move(x, k)
    (x2, k2), (u2, kdot) = bundle_jvp(bundle, move, x, k, t)
    b2 = grp.vee(grp.inverse(k2) @ kdot, check=False)
    return x2, k2, TotalTangent(u2, b2)


# -- model validation --------------------------------------------------------


@dataclass
class CompatibilityReport:
    residuals: dict
    thresholds: dict
    n_samples: int

    @property
    def passed(self):
        return all(self.residuals[k] <= self.thresholds[k] for k in self.residuals)

    def worst(self):
        if not self.residuals:
            return None, 0.0
        name = max(self.residuals, key=lambda k: self.residuals[k] / self.thresholds[k])
        return name, self.residuals[name]


THRESHOLDS = {
    "chart-maps": 1e-10,
    "transition-group": 1e-10,
    "cocycle": 1e-10,
    "connection-gluing": 1e-8,
    "section-gluing": 1e-10,
    "metric-gluing": 1e-10,
    "field-gluing": 1e-10,
}


def check_compatibility(bundle, n_samples=100, seed=0, sections=(), fields=None, raise_on_fail=True):
    """Max residuals of every gluing law at seeded overlap samples.

    Raises :class:`ModelInvalidError` naming the worst check when any
    residual exceeds its threshold (unless ``raise_on_fail`` is false).
    """
    rng = np.random.default_rng(seed)
    grp = bundle.group
    res = {k: 0.0 for k in THRESHOLDS}
    base = bundle.base
    fields = base.fields.values() if fields is None else fields
    n = bundle.dim
    for (a, b), trans in base.transitions.items():
        x = trans.sample(n_samples, rng)
        y = trans.forward(x)
        res["chart-maps"] = max(res["chart-maps"], float(np.max(np.abs(trans.inverse(y) - x))))
        if (a, b) not in bundle.transitions:
            continue
        g = bundle.g(a, b)(x)
        res["transition-group"] = max(res["transition-group"], float(np.max(grp.group_residual(g))))
        if (b, a) in bundle.transitions:
            back = bundle.g(b, a)(y)
            res["cocycle"] = max(res["cocycle"], float(np.max(np.abs(g @ back - np.eye(grp.matrix_size)))))
        for (c1, c2), trans2 in base.transitions.items():
            # triple overlaps where a -> b -> c2 and a -> c2 are all defined
            if c1 != b or c2 == a or (a, c2) not in bundle.transitions:
                continue
            inside = base.charts[c2].contains(trans2.forward(y)) & base.charts[b].contains(y)
            if np.any(inside):
                lhs = g[inside] @ bundle.g(b, c2)(y[inside])
                rhs = bundle.g(a, c2)(x[inside])
                res["cocycle"] = max(res["cocycle"], float(np.max(np.abs(lhs - rhs))))
        gi = grp.inverse(g)
        Aa = bundle.A(a)(x)
        Ab = bundle.A(b)(y)
        for i in range(n):
            v = np.zeros_like(x)
            v[:, i] = 1.0
            dphi_v = jet.derivative(trans.forward, x, v)
            dg = jet.derivative(bundle.g(a, b), x, v)
            lhs = _apply_form(Ab, dphi_v)
            rhs = grp.Ad(gi, _apply_form(Aa, v)) + grp.vee(gi @ dg, check=False)
            res["connection-gluing"] = max(res["connection-gluing"], float(np.max(np.abs(lhs - rhs))))
        for nu in sections:
            if a in nu.reps and b in nu.reps:
                d = nu(b, y) - grp.Ad(gi, nu(a, x))
                res["section-gluing"] = max(res["section-gluing"], float(np.max(np.abs(d))))
        jac = jet.jacobian(trans.forward, x)
        ga = base.metric_on(a)(x)
        gb = base.metric_on(b)(y)
        pulled = np.einsum("nki,nkl,nlj->nij", jac, gb, jac)
        res["metric-gluing"] = max(res["metric-gluing"], float(np.max(np.abs(pulled - ga))))
        for X in fields:
            if a in X.reps and b in X.reps:
                d = X(b, y) - np.einsum("nij,nj->ni", jac, X(a, x))
                res["field-gluing"] = max(res["field-gluing"], float(np.max(np.abs(d))))
    report = CompatibilityReport(res, dict(THRESHOLDS), n_samples)
    if raise_on_fail and not report.passed:
        name, value = report.worst()
        raise ModelInvalidError(f"bundle {bundle.name!r} fails {name} (residual {value:.3e})", name, value)
    return report


def field_gluing_residual(Y, source, target, n_samples=50, seed=0):
    """Disagreement of a total-space field's two chart representations."""
    bundle = Y.bundle
    rng = np.random.default_rng(seed)
    trans = bundle.base.transition(source, target)
    x = trans.sample(n_samples, rng)
    k = bundle.group.random_element(rng, n_samples)
    t = Y(source, x, k)
    x2, k2, t2 = change_chart(bundle, source, target, x, k, t)
    other = Y(target, x2, k2)
    return float(max(np.max(np.abs(other.u - t2.u)), np.max(np.abs(other.b - t2.b))))

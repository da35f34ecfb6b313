"""The connection metric ``g_A = p*g + <<omega_A, omega_A>>`` and its Killing fields.

In a bundle chart the metric is a ``(n + d) x (n + d)`` matrix acting on
left-logarithmic tangent coordinates ``(u, b)``. Killing residuals are Lie
derivatives ``L_Y g_A`` assembled from total-space brackets; no flows are
integrated anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jet
from .bundle import TotalTangent, TotalVectorField, bundle_jvp, constant_field, total_bracket
from .errors import DomainError


class ConnectionMetric:
    """``g_A(t1, t2) = g(u1, u2) + <<omega_A(t1), omega_A(t2)>>``."""

    def __init__(self, bundle):
        self.bundle = bundle
        self.group = bundle.group
        self.base = bundle.base

    @property
    def size(self):
        return self.bundle.dim + self.group.dim

    def omega_matrix(self, chart, x, k):
        """``(..., d, n + d)`` matrix of ``omega_A`` on ``(u, b)``."""
        grp = self.group
        ax = self.bundle.A(chart)(x)  # (..., n, d)
        adk = grp.Ad_matrix(grp.inverse(k))  # (..., d, d)
        horiz = jet.einsum("...ab,...ib->...ai", adk, ax)
        eye = np.broadcast_to(np.eye(grp.dim), jet.shape(horiz)[:-1] + (grp.dim,))
        return jet.concatenate([horiz, eye + 0.0 * horiz[..., :1]], axis=-1)

    def matrix(self, chart, x, k):
        n, d = self.bundle.dim, self.group.dim
        om = self.omega_matrix(chart, x, k)
        fiber = jet.einsum("...ai,ab,...bj->...ij", om, self.group.gram, om)
        gx = self.base.metric_on(chart)(x)
        pad_r = jet.concatenate([gx, np.zeros(jet.shape(gx)[:-1] + (d,))], axis=-1)
        pad = jet.concatenate([pad_r, np.zeros(jet.shape(gx)[:-2] + (d, n + d))], axis=-2)
        return pad + fiber

    def __call__(self, chart, x, k, t1, t2):
        return metric_eval(self, chart, x, k, t1, t2)


def metric_eval(gA, chart, x, k, t1, t2):
    """``g_A(t1, t2)`` straight from the defining formula."""
    from .bundle import connection_form

    b = gA.bundle
    gx = gA.base.metric_on(chart)(x)
    base = jet.einsum("...i,...ij,...j->...", t1.u, gx, t2.u)
    return base + gA.group.inner(connection_form(b, chart, x, k, t1), connection_form(b, chart, x, k, t2))


def _stack_tangent(t):
    return jet.concatenate([t.u, t.b], axis=-1)


def _split(v, n):
    return TotalTangent(v[..., :n], v[..., n:])


# -- Lie derivative of g_A ---------------------------------------------------


def _twisted_extension(bundle, x0, k0, t, shear):
    """A second extension of ``t`` away from ``(x0, k0)``.

    The base part picks up ``shear (x - x0)`` and the vertical part is
    ``Ad_{k^-1 k0} b``; both agree with ``t`` at the base point only.
    """
    grp = bundle.group

    def f(x, k):
        u = t.u + jet.einsum("ij,...j->...i", shear, x - x0)
        return TotalTangent(u, grp.Ad(grp.inverse(k) @ k0, t.b))

    return TotalVectorField(bundle, {c: f for c in bundle.charts}, "twisted-extension")


def lie_derivative_metric_total(Y, gA, chart, x, k, t1, t2, scheme="constant", seed=0):
    """``(L_Y g_A)(t1, t2)`` by ``Y g(T1, T2) - g([Y, T1], T2) - g(T1, [Y, T2])``.

    ``scheme`` chooses how the probes are extended to fields: ``"constant"``
    keeps the left-logarithmic coordinates fixed, ``"twisted"`` uses
    :func:`_twisted_extension`. The result is tensorial, so both agree.
    """
    bundle = gA.bundle
    if scheme == "constant":
        T1 = constant_field(bundle, t1)
        T2 = constant_field(bundle, t2)
    elif scheme == "twisted":
        rng = np.random.default_rng(seed)
        n = bundle.dim
        T1 = _twisted_extension(bundle, x, k, t1, rng.standard_normal((n, n)))
        T2 = _twisted_extension(bundle, x, k, t2, rng.standard_normal((n, n)))
    else:
        raise ValueError(f"unknown extension scheme {scheme!r}")
    y_t = Y(chart, x, k)

    def gval(xx, kk):
        return metric_eval(gA, chart, xx, kk, T1(chart, xx, kk), T2(chart, xx, kk))

    _, dg = bundle_jvp(bundle, gval, x, k, y_t)
    b1 = total_bracket(Y, T1, chart, x, k)
    b2 = total_bracket(Y, T2, chart, x, k)
    return dg - metric_eval(gA, chart, x, k, b1, t2) - metric_eval(gA, chart, x, k, t1, b2)


def lie_derivative_matrix(Y, gA, chart, x, k):
    """Full matrix of ``L_Y g_A`` on the left-logarithmic frame.

    ``L = dG[Y] - C^T G - G C`` where column ``j`` of ``C`` is ``[Y, e_j]``
    for the constant frame field ``e_j``.
    """
    bundle = gA.bundle
    n, size = bundle.dim, gA.size
    batch = np.shape(x)[:-1]
    G = gA.matrix(chart, x, k)
    _, dG = bundle_jvp(bundle, lambda xx, kk: gA.matrix(chart, xx, kk), x, k, Y(chart, x, k))
    cols = []
    for j in range(size):
        e = np.zeros(batch + (size,))
        e[..., j] = 1.0
        E = constant_field(bundle, _split(e[(0,) * len(batch)], n))
        cols.append(_stack_tangent(total_bracket(Y, E, chart, x, k)))
    C = np.stack(cols, axis=-1)
    return dG - np.einsum("...ki,...kj->...ij", C, G) - np.einsum("...ik,...kj->...ij", G, C)


@dataclass
class KillingReport:
    field: str
    n_samples: int
    max_residual: float
    mean_residual: float
    per_probe: dict
    tol: float
    seed: int

    @property
    def killing(self):
        return self.max_residual <= self.tol

    def as_dict(self):
        return {
            "field": self.field,
            "n_samples": self.n_samples,
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "per_probe": dict(self.per_probe),
            "tol": self.tol,
            "killing": self.killing,
            "seed": self.seed,
        }


def killing_residual(Y, gA, n_samples=200, seed=0, tol=1e-7, n_random=3, charts=None, samplers=None):
    """Sup of ``|L_Y g_A(t1, t2)| / (1 + |t1| |t2|)`` over samples and probes.

    Basis probes come from :func:`lie_derivative_matrix`; ``n_random`` extra
    random probe pairs per point go through the generic bracket formula with
    the twisted extension, so the two code paths check each other.
    ``samplers`` maps a chart to ``f(n, rng) -> x`` when only part of the
    chart should be probed (e.g. fields built from lattice solutions).
    """
    bundle = gA.bundle
    rng = np.random.default_rng(seed)
    per_point = []
    per_probe = {"basis": 0.0, "random": 0.0}
    n = bundle.dim
    for chart in charts or Y.charts:
        if samplers and chart in samplers:
            x = samplers[chart](n_samples, rng)
            k = bundle.group.random_element(rng, n_samples)
        else:
            x, k = bundle.sample(chart, n_samples, rng)
        L = lie_derivative_matrix(Y, gA, chart, x, k)
        basis = np.max(np.abs(L), axis=(-2, -1)) / 2.0
        per_probe["basis"] = max(per_probe["basis"], float(np.max(basis)))
        worst = basis
        for j in range(n_random):
            v1 = rng.standard_normal((n_samples, gA.size))
            v2 = rng.standard_normal((n_samples, gA.size))
            val = lie_derivative_metric_total(Y, gA, chart, x, k, _split(v1, n), _split(v2, n), "twisted", seed + j)
            norm = 1.0 + np.linalg.norm(v1, axis=-1) * np.linalg.norm(v2, axis=-1)
            r = np.abs(val) / norm
            per_probe["random"] = max(per_probe["random"], float(np.max(r)))
            worst = np.maximum(worst, r)
        per_point.append(worst)
    allr = np.concatenate(per_point)
    return KillingReport(Y.name, int(allr.size), float(np.max(allr)), float(np.mean(allr)), per_probe, tol, seed)


# -- structure checks --------------------------------------------------------


def metric_structure(gA, n_samples=200, seed=0):
    """Residuals of the defining properties of ``g_A`` on every chart.

    ``orthogonality``: g_A(lift X, a#); ``submersion``: g_A(lift X, lift Y)
    minus g(X, Y); ``fiber``: g_A(a#, b#) minus <<a, b>>; ``symmetry`` of the
    matrix; ``min_eigenvalue`` of the matrix (must be positive).
    """
    bundle, grp = gA.bundle, gA.group
    rng = np.random.default_rng(seed)
    res = {"orthogonality": 0.0, "submersion": 0.0, "fiber": 0.0, "symmetry": 0.0, "min_eigenvalue": np.inf}
    n = bundle.dim
    for chart in bundle.charts:
        x, k = bundle.sample(chart, n_samples, rng)
        u1 = rng.standard_normal((n_samples, n))
        u2 = rng.standard_normal((n_samples, n))
        a = grp.random_algebra(rng, n_samples)
        b = grp.random_algebra(rng, n_samples)
        ax = bundle.A(chart)(x)
        kinv = grp.inverse(k)

        def lift(u):
            return TotalTangent(u, -grp.Ad(kinv, np.einsum("...ia,...i->...a", ax, u)))

        fa, fb = TotalTangent(0 * u1, a), TotalTangent(0 * u1, b)
        gx = bundle.base.metric_on(chart)(x)
        res["orthogonality"] = max(res["orthogonality"], float(np.max(np.abs(metric_eval(gA, chart, x, k, lift(u1), fa)))))
        sub = metric_eval(gA, chart, x, k, lift(u1), lift(u2)) - np.einsum("...i,...ij,...j->...", u1, gx, u2)
        res["submersion"] = max(res["submersion"], float(np.max(np.abs(sub))))
        fib = metric_eval(gA, chart, x, k, fa, fb) - grp.inner(a, b)
        res["fiber"] = max(res["fiber"], float(np.max(np.abs(fib))))
        G = gA.matrix(chart, x, k)
        res["symmetry"] = max(res["symmetry"], float(np.max(np.abs(G - np.swapaxes(G, -1, -2)))))
        res["min_eigenvalue"] = min(res["min_eigenvalue"], float(np.min(np.linalg.eigvalsh(G))))
    return res


# -- isometries --------------------------------------------------------------


@dataclass(eq=False)
class BundleMap:
    """A self-map of the total space given chart by chart.

    ``reps[chart](x, k) -> (x', k')`` lands in chart ``targets[chart]``.
    ``samplers`` optionally restrict where the map is probed.
    """

    name: str
    reps: dict
    targets: dict = None
    samplers: dict = field(default_factory=dict)

    def target(self, chart):
        return chart if self.targets is None else self.targets[chart]


def right_translation(bundle, h, name="R_h"):
    return BundleMap(name, {c: (lambda x, k: (x + 0.0, k @ h)) for c in bundle.charts})


def identity_map(bundle):
    return BundleMap("identity", {c: (lambda x, k: (x + 0.0, k + 0.0)) for c in bundle.charts})


def _disc_sampler(radius):
    def sample(n, rng):
        r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=n))
        t = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)

    return sample


def hopf_lifted_rotation(bundle, angle):
    """Lift of the rotation of S^2 about the z-axis to the Hopf bundle.

    The local connection form is rotation invariant, so on the north chart
    the lift rotates the base and leaves the fibre alone; on the south chart
    the base turns the other way and the fibre phase turns by ``-angle``.
    """
    grp = bundle.group
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    phase = grp.exp(np.array([-angle]))

    def north(x, k):
        return jet.einsum("ij,...j->...i", rot, x), k + 0.0

    def south(x, k):
        return jet.einsum("ij,...j->...i", rot.T, x), k @ phase

    radius = 0.95 * bundle.base.charts["north"].upper[0]
    return BundleMap(f"lifted-rot-z({angle:g})", {"north": north, "south": south}, None, {"north": _disc_sampler(radius), "south": _disc_sampler(radius)})


def hopf_lifted_rotation_generator(bundle):
    """Generator of :func:`hopf_lifted_rotation` as a total-space field:
    ``(rot-z, 0)`` on the north chart and ``(rot-z, -1)`` on the south."""
    rot = bundle.base.fields["rot-z"]

    def north(x, k):
        return TotalTangent(rot.on("north")(x), np.zeros(np.shape(jet.primal(x))[:-1] + (1,)))

    def south(x, k):
        return TotalTangent(rot.on("south")(x), -np.ones(np.shape(jet.primal(x))[:-1] + (1,)))

    return TotalVectorField(bundle, {"north": north, "south": south}, "lifted-rot-z", True, True)


def isometry_check(phi, gA, n_samples=200, seed=0):
    """Max of ``|dPhi^T G(Phi(y)) dPhi - G(y)|`` over samples (entrywise).

    Raises :class:`DomainError` when an image point leaves its chart.
    """
    bundle, grp = gA.bundle, gA.group
    rng = np.random.default_rng(seed)
    n, size = bundle.dim, gA.size
    worst = 0.0
    for chart, f in phi.reps.items():
        sampler = phi.samplers.get(chart)
        if sampler is None:
            x, k = bundle.sample(chart, n_samples, rng)
        else:
            x = sampler(n_samples, rng)
            k = grp.random_element(rng, n_samples)
        x2, k2 = f(x, k)
        target = phi.target(chart)
        bundle.base.charts[target].require(x2)
        cols = []
        for j in range(size):
            e = np.zeros((n_samples, size))
            e[:, j] = 1.0
            t = _split(e, n)
            _, (du, dk) = bundle_jvp(bundle, f, x, k, t)
            db = grp.vee(grp.inverse(k2) @ dk, check=False)
            cols.append(np.concatenate([du, db], axis=-1))
        J = np.stack(cols, axis=-1)
        G1 = gA.matrix(chart, x, k)
        G2 = gA.matrix(target, x2, k2)
        d = np.einsum("...ki,...kl,...lj->...ij", J, G2, J) - G1
        worst = max(worst, float(np.max(np.abs(d))))
    return worst

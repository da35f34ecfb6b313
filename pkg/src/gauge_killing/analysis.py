"""Structural checks built on the bundle, metric and solver layers.

* :func:`moment_residual` and :func:`killing_lift_check` test the equivalence
  between the moment map equation and the Killing property of ``lift X +
  xi^nu``.
* :func:`decompose` splits a fibre-preserving Killing field into
  ``lift X + xi^nu + a^#``.
* :func:`natural_lift` builds ``lift X + xi^{nabla X}`` on the frame bundle
  of the round sphere.
* :func:`hamiltonian_check` and :func:`quantization_charge` cover circle
  bundles over symplectic surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jet
from .bundle import (
    AdjointSection,
    TotalTangent,
    TotalVectorField,
    contract_curvature,
    covariant_derivative,
    curvature,
    fundamental_field,
    horizontal_lift,
    total_bracket,
    vertical_field,
)
from .charts import VectorField, killing_residual_base
from .errors import DecompositionObstructedError, PreconditionError
from .metric import killing_residual
from .moment import GridSection, MomentMapProblem, parallel_kernel, solve

ALGEBRAIC_TOL = 1e-10
DIFFERENTIAL_TOL = 1e-7
SOLVER_TOL = 1e-5


def _norm(group, v):
    return np.sqrt(np.maximum(np.einsum("...a,ab,...b->...", v, group.gram, v), 0.0))


def section_samplers(*sections, margin=1):
    """Samplers restricted to where every lattice-backed section is defined."""
    samplers = {}
    for s in sections:
        if hasattr(s, "lattices"):
            for c, lat in s.lattices.items():
                samplers[c] = lambda n, rng, lat=lat: lat.sample_inside(n, rng, margin)
    return samplers


def _points(bundle, charts, n, rng, samplers):
    for c in charts:
        if samplers and c in samplers:
            yield c, samplers[c](n, rng)
        else:
            yield c, bundle.base.charts[c].sample(n, rng)


# -- moment map / Killing equivalence ----------------------------------------


def moment_residual(bundle, X, nu, n_samples=200, seed=0, samplers=None):
    """Max and mean over samples and coordinate directions of
    ``|iota_X F_A + nabla^A nu|``. ``X = None`` means the zero field."""
    rng = np.random.default_rng(seed)
    samplers = samplers if samplers is not None else section_samplers(nu)
    worst, parts = 0.0, []
    for c, x in _points(bundle, nu.charts, n_samples, rng, samplers):
        r = covariant_derivative(bundle, nu, c, x)
        if X is not None:
            r = r + contract_curvature(curvature(bundle, c, x), X.on(c)(x))
        norms = np.max(_norm(bundle.group, r), axis=-1)
        worst = max(worst, float(np.max(norms)))
        parts.append(norms)
    return {"max": worst, "mean": float(np.mean(np.concatenate(parts))), "n_samples": int(sum(len(p) for p in parts))}


@dataclass
class EquivalenceVerdict:
    moment_residual_max: float
    killing_residual_max: float
    verdict: str
    moment_tol: float
    killing_tol: float
    base_killing_residual: float
    note: str = ""

    @property
    def mismatch(self):
        return self.verdict == "MISMATCH"

    def as_dict(self):
        return {
            "moment_residual_max": self.moment_residual_max,
            "killing_residual_max": self.killing_residual_max,
            "verdict": self.verdict,
            "moment_tol": self.moment_tol,
            "killing_tol": self.killing_tol,
            "base_killing_residual": self.base_killing_residual,
            "note": self.note,
        }


def lifted_field(bundle, X, nu):
    """``lift X + xi^nu`` on the charts both are defined on."""
    return horizontal_lift(bundle, X) + vertical_field(bundle, nu)


def killing_lift_check(bundle, gA, X, nu, tol=DIFFERENTIAL_TOL, n_samples=100, seed=0, base_tol=1e-8, samplers=None):
    """Run the moment residual and the Killing residual of ``lift X + xi^nu``
    at the same tolerance and compare their verdicts.

    When ``X`` is not Killing on the base the verdict is ``vacuous-fail``.
    """
    base_res = killing_residual_base(X, bundle.base, n_samples, seed)
    if base_res > base_tol:
        return EquivalenceVerdict(np.nan, np.nan, "vacuous-fail", tol, tol, base_res, "base field is not Killing; the equivalence does not apply")
    samplers = samplers if samplers is not None else section_samplers(nu)
    mom = moment_residual(bundle, X, nu, n_samples, seed, samplers)["max"]
    kil = killing_residual(lifted_field(bundle, X, nu), gA, n_samples, seed, tol, samplers=samplers).max_residual
    mp, kp = mom <= tol, kil <= tol
    verdict = "both-pass" if mp and kp else "both-fail" if not (mp or kp) else "MISMATCH"
    return EquivalenceVerdict(mom, kil, verdict, tol, tol, base_res)


def perturbed_section(nu, bump, amplitude=0.1):
    """``nu + amplitude * bump`` keeping the lattice restriction of ``nu``.

    ``bump`` should be a genuine (glued) section that is not parallel, so the
    perturbed section violates the moment equation everywhere it matters.
    """
    reps = {c: (lambda x, f=f, g=bump.on(c): f(x) + amplitude * g(x)) for c, f in nu.reps.items()}
    out = AdjointSection(reps, f"{nu.name}+{amplitude}*{bump.name}")
    if hasattr(nu, "lattices"):
        out.lattices = nu.lattices
    return out


# -- decomposition of fibre-preserving Killing fields ------------------------


@dataclass(eq=False)
class DecompositionResult:
    X: VectorField
    nu: AdjointSection
    a: np.ndarray
    reconstruction_residual: float
    fiber_preserving_residual: float
    killing_residual: float
    solver: object
    nu_solver_gap: float
    kernel_dim: int
    ambiguity_note: str = ""
    center_dim: int = 0
    a_spread: float = 0.0
    stats: dict = field(default_factory=dict)


def _center_basis(group):
    """Basis of the centre of the algebra (common kernel of ad)."""
    stacked = np.concatenate([group.ad_matrix(np.eye(group.dim)[i]) for i in range(group.dim)], axis=0)
    _, s, vt = np.linalg.svd(stacked)
    rank = int(np.sum(s > 1e-10))
    return vt[rank:].T


def fiber_preserving_residual(Y, n_samples=50, seed=0):
    """Max base component of ``[Y, a^#]`` over basis ``a`` (zero iff ``Y``
    preserves the vertical distribution)."""
    bundle = Y.bundle
    rng = np.random.default_rng(seed)
    worst = 0.0
    for c in Y.charts:
        x, k = bundle.sample(c, n_samples, rng)
        for a in np.eye(bundle.group.dim):
            br = total_bracket(Y, fundamental_field(bundle, a), c, x, k)
            worst = max(worst, float(np.max(np.abs(br.u))))
    return worst


def decompose(Y, gA, regions, h, overlap=None, n_samples=100, seed=0, killing_tol=DIFFERENTIAL_TOL, n_fibre=4):
    """Split a fibre-preserving Killing field ``Y`` as ``lift X + xi^nu + a^#``.

    ``X`` is the projection of ``Y``. The vertical remainder ``c(x, k) =
    Ad_{k^-1} nu(x) + a`` is separated pointwise by sampling ``n_fibre``
    fibre points; the centre of the algebra cannot be separated this way, so
    its share goes to ``a`` as the sample mean and ``ambiguity_note`` says
    so. The moment map equation for ``X`` is solved on the lattice as the
    solvability certificate, and the lattice solution is compared with the
    recovered ``nu`` modulo the parallel kernel.
    """
    bundle = Y.bundle
    grp = bundle.group
    d = grp.dim
    fp = fiber_preserving_residual(Y, min(n_samples, 50), seed)
    if fp > ALGEBRAIC_TOL:
        raise PreconditionError(f"field {Y.name!r} does not preserve the vertical distribution (residual {fp:.3e})")
    kil = killing_residual(Y, gA, min(n_samples, 50), seed, killing_tol)
    if not kil.killing:
        raise PreconditionError(f"field {Y.name!r} is not Killing (residual {kil.max_residual:.3e})")

    ident = lambda x: grp.identity(jet.shape(x)[:-1])  # noqa: E731
    X = VectorField({c: (lambda x, c=c: Y(c, x, ident(x)).u) for c in Y.charts}, f"p*({Y.name})")

    def remainder(c, x, k):
        ax = bundle.A(c)(x)
        u = X.on(c)(x)
        return Y(c, x, k).b + grp.Ad(grp.inverse(k), jet.einsum("...ia,...i->...a", ax, u))

    # pointwise separation on sample points
    rng = np.random.default_rng(seed)
    ks = [grp.identity()] + [grp.random_element(rng) for _ in range(n_fibre - 1)]
    design = np.concatenate([np.concatenate([grp.Ad_matrix(grp.inverse(k)), np.eye(d)], axis=1) for k in ks], axis=0)
    center = _center_basis(grp)
    a_samples, proj_spread = [], 0.0
    for c in Y.charts:
        x = bundle.base.charts[c].sample(n_samples, rng)
        rhs = np.concatenate([remainder(c, x, np.broadcast_to(k, (n_samples,) + k.shape)) for k in ks], axis=-1)
        sol, *_ = np.linalg.lstsq(design, rhs.T, rcond=None)
        a_samples.append(sol[d:].T + sol[:d].T @ center @ center.T)  # centre share of nu moved into a
        u_k = np.stack([Y(c, x, np.broadcast_to(k, (n_samples,) + k.shape)).u for k in ks])
        proj_spread = max(proj_spread, float(np.max(np.abs(u_k - u_k[0]))))
    a_all = np.concatenate(a_samples)
    a = a_all.mean(axis=0)
    a_spread = float(np.max(np.abs(a_all - a)))
    note = ""
    if center.shape[1]:
        note = (
            f"algebra has a {center.shape[1]}-dimensional centre: constant central parts of nu and a are not separately "
            "identifiable; a is the sample mean of the central remainder and nu takes the rest"
        )
    elif a_spread > 1e-8:
        raise PreconditionError(f"fundamental part is not constant over the base (spread {a_spread:.3e})")

    nu = AdjointSection({c: (lambda x, c=c: remainder(c, x, ident(x)) - a) for c in Y.charts}, f"nu({Y.name})")

    # solvability certificate from the lattice solver
    problem = MomentMapProblem(bundle, X, regions, h, overlap)
    sol = solve(problem, seed=seed)
    if not sol.solvable:
        raise DecompositionObstructedError(f"moment map equation for p*Y has no solution (continuum residual {sol.continuum_residual:.3e})")
    kern = parallel_kernel(bundle, regions, h, overlap)
    gap = _gap_mod_kernel(problem, sol, nu, kern)

    recon = 0.0
    rng = np.random.default_rng(seed + 1)
    rebuilt = lifted_field(bundle, X, nu) + fundamental_field(bundle, a)
    for c in Y.charts:
        x, k = bundle.sample(c, n_samples, rng)
        dy = Y(c, x, k) - rebuilt(c, x, k)
        recon = max(recon, float(np.max(np.abs(dy.u))), float(np.max(np.abs(dy.b))))
    return DecompositionResult(
        X, nu, a, recon, fp, kil.max_residual, sol, gap, kern.dim, note, center.shape[1], a_spread,
        {"projection_spread": proj_spread},
    )


def _gap_mod_kernel(problem, solution, nu, kernel):
    """Sup over lattice nodes of ``nu_solver - nu`` after removing the
    kernel component (discrete L2 projection)."""
    d = problem.bundle.group.dim
    diff = []
    for c, lat in problem.lattices.items():
        exact = np.asarray(nu.on(c)(lat.nodes))
        got = solution.values[c][tuple(lat.multi.T)]
        diff.append((got - exact).reshape(-1))
    diff = np.concatenate(diff)
    if kernel.dim:
        n = problem.bundle.dim
        V = kernel.vectors
        G = np.kron(np.eye(V.shape[0] // d), problem.bundle.group.gram)
        coef = (V.T @ (G @ diff)) * problem.h**n
        diff = diff - V @ coef
    return float(np.max(np.abs(diff)))


# -- frame bundle natural lift -----------------------------------------------


def _log_conformal_gradient(x):
    # round metric 4/(1+r^2)^2 delta = lambda^2 delta; d log lambda
    r2 = x[..., 0] * x[..., 0] + x[..., 1] * x[..., 1]
    return jet.stack([-2.0 * x[..., 0] / (1.0 + r2), -2.0 * x[..., 1] / (1.0 + r2)], axis=-1)


def levi_civita_derivative(X, x):
    """``(nabla X)^i_j = d_j X^i + Gamma^i_{jk} X^k`` for the stereographic
    round metric, with the closed-form conformal Christoffel symbols
    ``Gamma^i_{jk} = delta^i_j u_k + delta^i_k u_j - delta_jk u_i``."""
    u = _log_conformal_gradient(x)
    Xx = X(x)
    dX = jet.jacobian(X, x)  # [..., i, j] = d_j X^i
    eye = np.eye(2)
    ux = jet.einsum("...k,...k->...", u, Xx)
    gamma_term = jet.einsum("ij,...->...ij", eye, ux) + jet.einsum("...i,...j->...ij", Xx, u) - jet.einsum("...j,...i->...ij", Xx, u)
    return dX + gamma_term


def nabla_section(X):
    """``nabla X`` as an so(2)-valued section in the stereographic orthonormal
    frame. The frame is a constant multiple of the coordinate frame at each
    point, so the frame matrix equals the coordinate matrix; its ``E``
    coefficient is the ``(1, 0)`` entry."""
    return AdjointSection({c: (lambda x, f=f: jet.expand_dims(levi_civita_derivative(f, x)[..., 1, 0], -1)) for c, f in X.reps.items()}, f"nabla({X.name})")


@dataclass(eq=False)
class NaturalLift:
    field: TotalVectorField
    section: AdjointSection
    skew_residual: float
    moment_residual_max: float
    killing_residual: float
    base_killing_residual: float


def natural_lift(example, X, n_samples=200, seed=0, base_tol=1e-8):
    """``X^L = lift X + xi^{nabla X}`` with its verification statistics."""
    bundle = example.bundle
    base_res = killing_residual_base(X, bundle.base, n_samples, seed)
    if base_res > base_tol:
        raise PreconditionError(f"{X.name!r} is not Killing on the base (residual {base_res:.3e})")
    rng = np.random.default_rng(seed)
    skew = 0.0
    for c in X.charts:
        x = bundle.base.charts[c].sample(n_samples, rng)
        m = levi_civita_derivative(X.on(c), x)
        skew = max(skew, float(np.max(np.abs(m + np.swapaxes(m, -1, -2)))))
    nu = nabla_section(X)
    moment_max = moment_residual(bundle, X, nu, n_samples, seed)["max"]
    Y = lifted_field(bundle, X, nu)
    Y.name = f"natural-lift({X.name})"
    kil = killing_residual(Y, _metric(bundle), min(n_samples, 100), seed).max_residual
    return NaturalLift(Y, nu, skew, moment_max, kil, base_res)


def _metric(bundle):
    from .metric import ConnectionMetric

    return ConnectionMetric(bundle)


def lift_bracket_closure(example, names=("rot-x", "rot-y", "rot-z"), n_samples=100, seed=0):
    """Residual of ``[X_i^L, X_j^L] = s_k X_k^L`` where ``[X_i, X_j] = s_k X_k``
    on the base (the sign ``s_k`` is fitted from the base bracket)."""
    bundle = example.bundle
    fields = [example.field(n) for n in names]
    lifts = [natural_lift(example, f, 20, seed).field for f in fields]
    rng = np.random.default_rng(seed)
    worst_base, worst_total = 0.0, 0.0
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        for c in bundle.charts:
            x, kk = bundle.sample(c, n_samples, rng)
            xb = jet.derivative(fields[j].on(c), x, fields[i].on(c)(x)) - jet.derivative(fields[i].on(c), x, fields[j].on(c)(x))
            target = fields[k].on(c)(x)
            s = float(np.sum(xb * target) / np.sum(target * target))
            worst_base = max(worst_base, float(np.max(np.abs(xb - s * target))))
            tb = total_bracket(lifts[i], lifts[j], c, x, kk)
            tk = lifts[k](c, x, kk)
            worst_total = max(worst_total, float(np.max(np.abs(tb.u - s * tk.u))), float(np.max(np.abs(tb.b - s * tk.b))))
    return {"base": worst_base, "total": worst_total}


# -- quantization ------------------------------------------------------------


def quantization_charge(bundle, n_radial=48, n_angular=96):
    """``(1 / 2 pi) * integral of F_A`` over a sphere covered by two
    orientation-compatible stereographic charts.

    The unit disc of each chart is one hemisphere; Gauss-Legendre in the
    radius and the trapezoid rule in the angle (spectrally accurate for
    periodic integrands).
    """
    nodes, weights = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * (nodes + 1.0)
    wr = 0.5 * weights
    theta = 2.0 * np.pi * np.arange(n_angular) / n_angular
    wt = 2.0 * np.pi / n_angular
    R, T = np.meshgrid(r, theta, indexing="ij")
    pts = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
    weight = (np.outer(wr, np.full(n_angular, wt)) * R).reshape(-1)
    total = 0.0
    for c in bundle.charts:
        F = curvature(bundle, c, pts)[:, 0, 1, 0]
        total += float(np.sum(F * weight))
    return total / (2.0 * np.pi)


def hamiltonian_check(example, X, nu, n_samples=200, seed=0, anchor=None, reference=None, samplers=None):
    """Check ``iota_X omega = dH`` for ``H = -f_nu + c`` on a circle bundle
    with ``omega = F_A``.

    ``f_nu`` is the coefficient of ``nu`` in the basis element of the circle
    algebra (the identification fixed so that the moment and Hamiltonian
    residuals coincide). ``c`` anchors ``H`` to zero at ``anchor`` (default:
    origin of the first chart). With ``reference`` (a scalar field) the
    report also gives the sup deviation of ``H`` from it after aligning
    constants.
    """
    bundle = example.bundle
    rng = np.random.default_rng(seed)
    samplers = samplers if samplers is not None else section_samplers(nu)
    charts = list(nu.charts)
    anchor_chart = charts[0]
    anchor = np.zeros((1, bundle.dim)) if anchor is None else np.asarray(anchor, dtype=float).reshape(1, -1)
    const = float(nu.on(anchor_chart)(anchor)[0, 0])

    def hamiltonian(c):
        return lambda x: -nu.on(c)(x)[..., 0] + const

    worst, diffs = 0.0, []
    for c, x in _points(bundle, charts, n_samples, rng, samplers):
        F = curvature(bundle, c, x)[..., 0]
        iota = jet.einsum("...j,...ji->...i", X.on(c)(x), F)
        dH = jet.jacobian(hamiltonian(c), x)
        worst = max(worst, float(np.max(np.abs(iota - dH))))
        if reference is not None:
            diffs.append(hamiltonian(c)(x) - reference.on(c)(x))
    out = {"max": worst, "constant": const, "anchor": anchor.ravel().tolist(), "identification": "f_nu = coefficient of nu on the circle generator"}
    if reference is not None:
        diffs = np.concatenate(diffs)
        out["reference_deviation"] = float(np.max(np.abs(diffs - np.mean(diffs))))
    return out

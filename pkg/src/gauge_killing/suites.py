"""Named verification suites run by the command-line tool.

A suite takes an :class:`~gauge_killing.catalog.Example` and a
:class:`~gauge_killing.config.RunConfig` and returns a list of checks. Each
check is a dict ``{name, paper_ref, residual, tol, pass}`` where
``paper_ref`` states in words the property being verified.
"""

from __future__ import annotations

import math

import numpy as np

from . import jet
from .analysis import (
    decompose,
    killing_lift_check,
    lift_bracket_closure,
    hamiltonian_check,
    moment_residual,
    natural_lift,
    perturbed_section,
    quantization_charge,
)
from .bundle import (
    AdjointSection,
    TotalTangent,
    check_compatibility,
    covariant_derivative,
    curvature,
    field_gluing_residual,
    fundamental_field,
    horizontal_lift,
    total_bracket,
    vertical_field,
)
from .catalog import REGION, SolveRegion, flat_bundle
from .charts import ScalarField, VectorField, lie_bracket_base, sphere_embedding
from .errors import InvalidArgumentError
from .metric import (
    ConnectionMetric,
    hopf_lifted_rotation,
    hopf_lifted_rotation_generator,
    identity_map,
    isometry_check,
    killing_residual,
    lie_derivative_metric_total,
    metric_structure,
    right_translation,
)
from .moment import MomentMapProblem, parallel_kernel, solve

STATEMENTS = {
    "model": "local data glue to a principal bundle with connection",
    "bracket-curvature": "bracket of horizontal lifts is the lift of the bracket minus the vertical field of the curvature",
    "fundamental-horizontal": "fundamental fields commute with horizontal lifts",
    "fundamental-vertical": "fundamental fields commute with invariant vertical fields",
    "horizontal-vertical": "bracket of a horizontal lift with an invariant vertical field is the vertical field of the covariant derivative",
    "lift-gluing": "horizontal lifts agree across chart overlaps",
    "orthogonality": "horizontal lifts are orthogonal to fundamental fields in the connection metric",
    "submersion": "the bundle projection is a Riemannian submersion",
    "fiber": "on fundamental fields the connection metric is the algebra inner product",
    "symmetry": "the connection metric is symmetric",
    "positivity": "the connection metric is positive definite",
    "fundamental-killing": "fundamental fields are Killing for the connection metric",
    "extension-independence": "the metric Lie derivative does not depend on how probes are extended",
    "right-translation": "right translations are isometries of the connection metric",
    "identity-isometry": "the identity map is an isometry",
    "lifted-rotation": "a bundle map covering a base isometry and preserving the connection is an isometry",
    "equivalence": "for a Killing base field, the lift plus vertical field is Killing iff the moment map equation holds",
    "negative-control": "a section violating the moment map equation gives a non-Killing lift",
    "kernel-dim": "connection-preserving gauge algebra equals the parallel sections of the adjoint bundle",
    "kernel-parallel": "kernel elements are parallel sections",
    "kernel-gap": "the parallel-section kernel is separated from the rest of the spectrum",
    "flat-kernel": "for the flat connection every constant algebra element is parallel",
    "decomposition-base": "an invariant fibre-preserving Killing field projects to a Killing base field",
    "decomposition-parts": "an invariant fibre-preserving Killing field splits as lift plus vertical plus fundamental field",
    "decomposition-solver": "the vertical part solves the moment map equation",
    "decomposition-ambiguity": "with a non-trivial centre the fundamental part is determined only up to central constants",
    "natural-skew": "the covariant derivative of a Killing field is skew",
    "natural-moment": "the covariant derivative of a Killing field solves the moment map equation on the frame bundle",
    "natural-killing": "the natural lift of a Killing field is Killing",
    "natural-closure": "natural lifts close under the bracket like the base fields",
    "charge": "the curvature integrates to an integral multiple of the circle period",
    "hamiltonian": "the moment map gives a Hamiltonian for the base rotation",
    "hamiltonian-height": "the rotation Hamiltonian is the height function up to a constant",
}


def check(name, kind, residual, tol, passed=None, overrides=None):
    """One report entry; ``overrides`` maps check names to tolerances."""
    if overrides and name in overrides:
        tol = float(overrides[name])
    residual = float(residual)
    if passed is None or (overrides and name in overrides):
        passed = bool(np.isfinite(residual) and residual <= tol)
    return {"name": name, "paper_ref": STATEMENTS[kind], "residual": residual, "tol": float(tol), "pass": bool(passed)}


def _max_abs(t):
    if isinstance(t, TotalTangent):
        return max(float(np.max(np.abs(t.u))), float(np.max(np.abs(t.b))))
    return float(np.max(np.abs(t)))


# -- identities --------------------------------------------------------------


def identity_residuals(example, n_samples=200, seed=0):
    """Worst residuals of the bracket identities over the example's field
    pairs, its sections and a random algebra element per chart."""
    B = example.bundle
    grp = B.group
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(("bracket-curvature", "fundamental-horizontal", "fundamental-vertical", "horizontal-vertical"), 0.0)
    for p1, p2 in example.field_pairs:
        X1, X2 = example.field(p1), example.field(p2)
        L1, L2 = horizontal_lift(B, X1), horizontal_lift(B, X2)
        for c in B.charts:
            x, k = B.sample(c, n_samples, rng)
            kinv = grp.inverse(k)
            xb = lie_bracket_base(X1.on(c), X2.on(c), x)
            F = curvature(B, c, x, X1.on(c)(x), X2.on(c)(x))
            lifted = TotalTangent(xb, -grp.Ad(kinv, jet.einsum("...ia,...i->...a", B.A(c)(x), xb)))
            expected = lifted - TotalTangent(0.0 * x, grp.Ad(kinv, F))
            worst["bracket-curvature"] = max(worst["bracket-curvature"], _max_abs(total_bracket(L1, L2, c, x, k) - expected))
            fa = fundamental_field(B, grp.random_algebra(rng))
            worst["fundamental-horizontal"] = max(worst["fundamental-horizontal"], _max_abs(total_bracket(fa, L1, c, x, k)))
            for nu in example.sections.values():
                xi = vertical_field(B, nu)
                worst["fundamental-vertical"] = max(worst["fundamental-vertical"], _max_abs(total_bracket(fa, xi, c, x, k)))
                cov = covariant_derivative(B, nu, c, x, X1.on(c)(x))
                d = total_bracket(L1, xi, c, x, k) - TotalTangent(0.0 * x, grp.Ad(kinv, cov))
                worst["horizontal-vertical"] = max(worst["horizontal-vertical"], _max_abs(d))
    return worst


IDENTITY_TOLS = {
    "bracket-curvature": 1e-8,
    "fundamental-horizontal": 1e-10,
    "fundamental-vertical": 1e-10,
    "horizontal-vertical": 1e-8,
}


def suite_bracket_identities(example, cfg):
    B = example.bundle
    tol = cfg.tolerances
    rep = check_compatibility(B, min(cfg.n_samples, 100), cfg.seed, sections=list(example.sections.values()), raise_on_fail=False)
    out = [check(f"model:{k}", "model", v, rep.thresholds[k], overrides=tol) for k, v in sorted(rep.residuals.items())]
    res = identity_residuals(example, cfg.n_samples, cfg.seed)
    out += [check(k, k, v, IDENTITY_TOLS[k], overrides=tol) for k, v in res.items()]
    if len(B.charts) > 1:
        charts = list(B.charts)
        glue = max(field_gluing_residual(horizontal_lift(B, example.field(n)), charts[0], charts[1], 50, cfg.seed) for n in sorted(example.base.fields))
        out.append(check("lift-gluing", "lift-gluing", glue, 1e-10, overrides=tol))
    return out


def suite_metric_structure(example, cfg):
    B = example.bundle
    gA = ConnectionMetric(B)
    tol = cfg.tolerances
    s = metric_structure(gA, cfg.n_samples, cfg.seed)
    out = [check(k, k, s[k], 1e-12, overrides=tol) for k in ("orthogonality", "submersion", "fiber", "symmetry")]
    out.append(check("positivity", "positivity", -s["min_eigenvalue"], 0.0, passed=s["min_eigenvalue"] > 0, overrides=tol))
    rng = np.random.default_rng(cfg.seed)
    n = min(cfg.n_samples, 50)
    fa = max(killing_residual(fundamental_field(B, B.group.random_algebra(rng)), gA, n, cfg.seed + i).max_residual for i in range(3))
    out.append(check("fundamental-killing", "fundamental-killing", fa, 1e-10, overrides=tol))
    # two probe extensions must give the same Lie derivative for a generic field
    sec = next(iter(example.sections.values()))
    names = sorted(example.base.fields)
    Y = horizontal_lift(B, example.field(names[0])) + vertical_field(B, sec)
    worst = 0.0
    d = B.group.dim
    for c in B.charts:
        x, k = B.sample(c, n, rng)
        t1 = TotalTangent(rng.standard_normal(x.shape), rng.standard_normal(x.shape[:-1] + (d,)))
        t2 = TotalTangent(rng.standard_normal(x.shape), rng.standard_normal(x.shape[:-1] + (d,)))
        a = lie_derivative_metric_total(Y, gA, c, x, k, t1, t2, "constant")
        b = lie_derivative_metric_total(Y, gA, c, x, k, t1, t2, "twisted", seed=cfg.seed)
        worst = max(worst, float(np.max(np.abs(a - b))))
    out.append(check("extension-independence", "extension-independence", worst, 1e-9, overrides=tol))
    return out


def suite_isometries(example, cfg):
    B = example.bundle
    gA = ConnectionMetric(B)
    tol = cfg.tolerances
    rng = np.random.default_rng(cfg.seed)
    n = min(cfg.n_samples, 50)
    rk = max(isometry_check(right_translation(B, B.group.random_element(rng)), gA, n, cfg.seed + i) for i in range(20))
    out = [check("right-translation", "right-translation", rk, 1e-10, overrides=tol)]
    out.append(check("identity-isometry", "identity-isometry", isometry_check(identity_map(B), gA, n, cfg.seed), 1e-10, overrides=tol))
    if _is_hopf(example):
        angle = float(rng.uniform(0.2, 2.0))
        out.append(check("lifted-rotation", "lifted-rotation", isometry_check(hopf_lifted_rotation(B, angle), gA, cfg.n_samples, cfg.seed), 1e-8, overrides=tol))
    return out


def _is_hopf(example):
    return example.symplectic or example.id == "hopf"


# -- solver-backed suites ----------------------------------------------------


def _equivalence_tol(sol):
    # solvable: the residual floor is the discretisation error; otherwise the cut itself
    if sol.solvable:
        return max(1e-7, 10.0 * sol.continuum_residual)
    return max(1e-7, sol.threshold)


def suite_moment_equivalence(example, cfg):
    B = example.bundle
    gA = ConnectionMetric(B)
    tol = cfg.tolerances
    bump = next(iter(example.sections.values()))
    n = min(cfg.n_samples, 100)
    out = []
    for name in example.base.killing:
        X = example.field(name)
        sol = solve(MomentMapProblem.for_example(example, X, cfg.h), seed=cfg.seed)
        t = _equivalence_tol(sol)
        if not cfg.perturb:
            v = killing_lift_check(B, gA, X, sol.section, tol=t, n_samples=n, seed=cfg.seed)
            # an obstructed equation must fail both ways; its rows pass on agreement
            expected, tag = ("both-pass", "") if sol.solvable else ("both-fail", "-obstructed")
            out.append(check(f"{name}:killing{tag}", "equivalence", v.killing_residual_max, t, passed=v.verdict == expected))
            out.append(check(f"{name}:moment{tag}", "equivalence", v.moment_residual_max, t, passed=v.verdict == expected))
        nu = perturbed_section(sol.section, bump, 0.1)
        v = killing_lift_check(B, gA, X, nu, tol=t, n_samples=n, seed=cfg.seed)
        out.append(check(f"{name}:perturbed", "negative-control", v.killing_residual_max, t, passed=v.verdict == "both-fail"))
    return out


def _zero_field(example):
    return VectorField({c: (lambda x: 0.0 * x) for c in example.bundle.charts}, "zero")


def suite_gauge_kernel(example, cfg):
    B = example.bundle
    tol = cfg.tolerances
    ker = parallel_kernel(B, example.solve_regions, cfg.h, example.overlap_annulus)
    out = []
    if example.expected_kernel_dim is not None:
        out.append(check("kernel-dim", "kernel-dim", abs(ker.dim - example.expected_kernel_dim), 0.0, overrides=tol))
    zero = _zero_field(example)
    worst = max((moment_residual(B, zero, s, min(cfg.n_samples, 100), cfg.seed)["max"] for s in ker.sections), default=0.0)
    out.append(check("kernel-parallel", "kernel-parallel", worst, 1e-8, overrides=tol))
    rest = ker.singular_values[ker.dim:]
    gap = ker.threshold / rest[0] if len(rest) else 0.0
    out.append(check("kernel-gap", "kernel-gap", gap, 1.0, overrides=tol))
    flat = flat_bundle(B.group, *REGION)
    region = (SolveRegion("box", (-1.0, -1.0), (1.0, 1.0)),)
    fk = parallel_kernel(flat, region, max(cfg.h, 0.1))
    out.append(check("flat-kernel-dim", "flat-kernel", abs(fk.dim - B.group.dim), 0.0, overrides=tol))
    return out


def _manufactured_field(example):
    """A fibre-preserving invariant Killing field with known parts.

    Returns ``(Y, X, nu or None, a or None)``; ``None`` marks parts that are
    only determined up to the centre.
    """
    B = example.bundle
    d = B.group.dim
    a = np.linspace(0.3, -0.7, d) if d > 1 else np.array([0.4])
    if _is_hopf(example):
        return hopf_lifted_rotation_generator(B), example.field("rot-z"), None, None
    if example.frame_bundle:
        nl = natural_lift(example, example.field("rot-z"), 20)
        return nl.field + fundamental_field(B, a), example.field("rot-z"), nl.section, None
    # boxes: a Killing field along which A is invariant, nu = A(X)
    name = _invariant_direction(example)
    X = example.field(name)
    nu = AdjointSection({c: (lambda x, c=c: jet.einsum("...ia,...i->...a", B.A(c)(x), X.on(c)(x))) for c in B.charts}, f"A({name})")
    Y = horizontal_lift(B, X) + vertical_field(B, nu) + fundamental_field(B, a)
    return Y, X, nu, (a if not B.group.is_abelian else None)


def _invariant_direction(example):
    """First base Killing field ``X`` with ``L_X A = 0`` on samples."""
    B = example.bundle
    rng = np.random.default_rng(11)
    for name in example.base.killing:
        X = example.field(name)
        worst = 0.0
        for c in B.charts:
            x = B.base.charts[c].sample(20, rng)
            Xx = X.on(c)(x)
            dA = jet.derivative(B.A(c), x, Xx)
            dX = jet.jacobian(X.on(c), x)
            lie = dA + jet.einsum("...ji,...ja->...ia", dX, B.A(c)(x))
            worst = max(worst, float(np.max(np.abs(lie))))
        if worst < 1e-12:
            return name
    raise InvalidArgumentError(f"example {example.id!r} has no connection-preserving Killing field for the decomposition suite")


def suite_decomposition(example, cfg):
    B = example.bundle
    gA = ConnectionMetric(B)
    tol = cfg.tolerances
    Y, X, nu, a = _manufactured_field(example)
    r = decompose(Y, gA, example.solve_regions, cfg.h, example.overlap_annulus, min(cfg.n_samples, 100), cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    xerr = 0.0
    for c in B.charts:
        x = B.base.charts[c].sample(50, rng) * 0.6
        xerr = max(xerr, float(np.max(np.abs(r.X.on(c)(x) - X.on(c)(x)))))
    out = [check("base-field", "decomposition-base", xerr, 1e-8, overrides=tol)]
    out.append(check("reconstruction", "decomposition-parts", r.reconstruction_residual, 1e-6, overrides=tol))
    if a is not None:
        out.append(check("fundamental-part", "decomposition-parts", float(np.max(np.abs(r.a - a))), 1e-8, overrides=tol))
    if nu is not None and a is not None:
        nerr = 0.0
        for c in B.charts:
            x = B.base.charts[c].sample(50, rng) * 0.6
            nerr = max(nerr, float(np.max(np.abs(r.nu.on(c)(x) - nu.on(c)(x)))))
        out.append(check("vertical-part", "decomposition-parts", nerr, 1e-6, overrides=tol))
    out.append(check("solver-agreement", "decomposition-solver", r.nu_solver_gap, 5.0 * cfg.h**2, overrides=tol))
    if r.center_dim:
        out.append(check("ambiguity-flagged", "decomposition-ambiguity", 0.0 if r.ambiguity_note else 1.0, 0.0, overrides=tol))
    return out


def suite_natural_lift(example, cfg):
    if not example.frame_bundle:
        raise InvalidArgumentError(f"suite natural-lift needs a frame bundle with its Levi-Civita connection; {example.id!r} is not one")
    tol = cfg.tolerances
    out = []
    for name in example.base.killing:
        nl = natural_lift(example, example.field(name), cfg.n_samples, cfg.seed)
        out.append(check(f"{name}:skew", "natural-skew", nl.skew_residual, 1e-10, overrides=tol))
        out.append(check(f"{name}:moment", "natural-moment", nl.moment_residual_max, 1e-7, overrides=tol))
        out.append(check(f"{name}:killing", "natural-killing", nl.killing_residual, 1e-7, overrides=tol))
    closure = lift_bracket_closure(example, tuple(example.base.killing), min(cfg.n_samples, 100), cfg.seed)
    out.append(check("closure", "natural-closure", closure["total"], 1e-8, overrides=tol))
    return out


def height_reference(example, axis=2, scale=0.5):
    """``scale`` times an ambient sphere coordinate, as a scalar field."""
    return ScalarField({c: (lambda x, c=c: scale * sphere_embedding(x, c)[..., axis]) for c in example.bundle.charts}, "height")


def suite_quantization(example, cfg):
    if not _is_hopf(example):
        raise InvalidArgumentError(f"suite quantization needs the circle bundle over the sphere; {example.id!r} is not one")
    tol = cfg.tolerances
    charge = quantization_charge(example.bundle)
    out = [check("charge", "charge", abs(abs(charge) - round(abs(charge))) if round(abs(charge)) >= 1 else math.inf, 1e-6, overrides=tol)]
    X = example.field("rot-z")
    sol = solve(MomentMapProblem.for_example(example, X, cfg.h), seed=cfg.seed)
    hc = hamiltonian_check(example, X, sol.section, min(cfg.n_samples, 200), cfg.seed, reference=height_reference(example))
    out.append(check("hamiltonian", "hamiltonian", hc["max"], 5.0 * cfg.h**2, overrides=tol))
    out.append(check("hamiltonian-height", "hamiltonian-height", hc["reference_deviation"], 5.0 * cfg.h**2, overrides=tol))
    return out


SUITE_FUNCTIONS = {
    "bracket-identities": suite_bracket_identities,
    "metric-structure": suite_metric_structure,
    "isometries": suite_isometries,
    "moment-equivalence": suite_moment_equivalence,
    "gauge-kernel": suite_gauge_kernel,
    "decomposition": suite_decomposition,
    "natural-lift": suite_natural_lift,
    "quantization": suite_quantization,
}


def run_suite(example, cfg):
    """Validate the model, run the suite and return the report dict.

    Raises :class:`~gauge_killing.errors.ModelInvalidError` before running
    anything if the example's local data do not glue.
    """
    from . import __version__

    check_compatibility(example.bundle, min(cfg.n_samples, 100), cfg.seed, sections=list(example.sections.values()))
    checks = SUITE_FUNCTIONS[cfg.suite](example, cfg)
    return {
        "config": cfg.echo(),
        "checks": checks,
        "tolerances": {c["name"]: c["tol"] for c in checks},
        "verdict": "pass" if checks and all(c["pass"] for c in checks) else "fail",
        "seed": cfg.seed,
        "version": __version__,
    }

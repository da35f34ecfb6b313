import numpy as np
import numpy.testing as npt
import pytest
from scipy import integrate

from gauge_killing import jet
from gauge_killing.analysis import (
    decompose,
    fiber_preserving_residual,
    hamiltonian_check,
    killing_lift_check,
    levi_civita_derivative,
    lift_bracket_closure,
    moment_residual,
    natural_lift,
    perturbed_section,
    quantization_charge,
)
from gauge_killing.bundle import AdjointSection, TotalTangent, TotalVectorField, curvature, fundamental_field, horizontal_lift, vertical_field
from gauge_killing.catalog import get_example
from gauge_killing.charts import ScalarField, sphere_embedding
from gauge_killing.errors import DecompositionObstructedError, PreconditionError
from gauge_killing.metric import ConnectionMetric, hopf_lifted_rotation_generator
from gauge_killing.moment import MomentMapProblem, solve


def ambient(example, axis, scale):
    return AdjointSection({c: (lambda x, c=c: scale * sphere_embedding(x, c)[..., axis : axis + 1]) for c in example.bundle.charts}, f"{scale}*coord{axis}")


# -- moment residual and the equivalence ------------------------------------------------


@pytest.mark.parametrize("eid, scale", [("hopf", -0.5), ("frame-s2", -1.0)])
def test_height_functions_solve_rotation_moment_maps(eid, scale):
    ex = get_example(eid)
    for axis, name in enumerate(("rot-x", "rot-y", "rot-z")):
        assert moment_residual(ex.bundle, ex.field(name), ambient(ex, axis, scale), 200)["max"] <= 1e-13
        # the opposite sign is wrong by a definite amount
        assert moment_residual(ex.bundle, ex.field(name), ambient(ex, axis, -scale), 200)["max"] > 0.5


def test_equivalence_verdicts(hopf):
    B = hopf.bundle
    gA = ConnectionMetric(B)
    X = hopf.field("rot-y")
    exact = ambient(hopf, 1, -0.5)
    good = killing_lift_check(B, gA, X, exact, tol=1e-10, n_samples=60)
    assert good.verdict == "both-pass" and not good.mismatch
    bad = killing_lift_check(B, gA, X, perturbed_section(exact, hopf.sections["exp-x"], 0.1), tol=1e-7, n_samples=60)
    assert bad.verdict == "both-fail"
    vac = killing_lift_check(B, gA, hopf.field("dilation"), exact, n_samples=60)
    assert vac.verdict == "vacuous-fail"
    assert set(good.as_dict()) >= {"verdict", "moment_residual_max", "killing_residual_max"}


def test_equivalence_with_solver_section(frame):
    B = frame.bundle
    gA = ConnectionMetric(B)
    X = frame.field("rot-x")
    sol = solve(MomentMapProblem.for_example(frame, X, 0.04))
    tol = max(1e-7, 10 * sol.continuum_residual)
    v = killing_lift_check(B, gA, X, sol.section, tol=tol, n_samples=60)
    assert v.verdict == "both-pass"
    # the Killing residual tracks the moment residual (same order of magnitude)
    assert 0.1 < v.killing_residual_max / v.moment_residual_max < 10


# -- decomposition ------------------------------------------------------------------


def test_decomposition_round_trip_su2(su2box, rng):
    B = su2box.bundle
    X = su2box.field("trans-x2")
    a = np.array([0.3, -0.7, 0.2])
    nu = AdjointSection({"box": lambda x: jet.einsum("...ia,...i->...a", B.A("box")(x), X.on("box")(x))}, "A(X)")
    Y = horizontal_lift(B, X) + vertical_field(B, nu) + fundamental_field(B, a)
    r = decompose(Y, ConnectionMetric(B), su2box.solve_regions, 0.05)
    npt.assert_allclose(r.a, a, atol=1e-8)
    x = rng.uniform(-1.3, 1.3, (50, 2))
    npt.assert_allclose(r.X.on("box")(x), X.on("box")(x), atol=1e-8)
    npt.assert_allclose(r.nu.on("box")(x), nu.on("box")(x), atol=1e-6)
    assert r.reconstruction_residual <= 1e-6
    assert r.kernel_dim == 0 and r.center_dim == 0 and r.ambiguity_note == ""
    assert r.nu_solver_gap <= 5 * 0.05**2


def test_decomposition_flags_abelian_ambiguity(hopf):
    B = hopf.bundle
    r = decompose(hopf_lifted_rotation_generator(B), ConnectionMetric(B), hopf.solve_regions, 0.05, hopf.overlap_annulus)
    assert r.center_dim == 1 and "centre" in r.ambiguity_note
    assert r.reconstruction_residual <= 1e-6
    assert r.kernel_dim == 1
    x = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    npt.assert_allclose(r.X.on("north")(x), hopf.field("rot-z").on("north")(x), atol=1e-12)


def test_decomposition_preconditions(hopf, su2box):
    B = hopf.bundle
    gA = ConnectionMetric(B)
    with pytest.raises(PreconditionError):
        decompose(horizontal_lift(B, hopf.field("rot-z")), gA, hopf.solve_regions, 0.05, hopf.overlap_annulus)
    # a base component that depends on the fibre point tilts the vertical distribution
    S = su2box.bundle
    grp = S.group
    tilt = TotalVectorField(S, {"box": lambda x, k: TotalTangent(grp.vee(k - grp.inverse(k), check=False)[..., :2] + 0 * x, 0 * x[..., :1] + np.zeros(3))}, "tilt")
    assert fiber_preserving_residual(tilt) > 1e-3
    assert fiber_preserving_residual(vertical_field(S, su2box.sections["wave"])) <= 1e-12
    with pytest.raises(PreconditionError):
        decompose(tilt, ConnectionMetric(S), su2box.solve_regions, 0.1)


def test_decomposition_reports_obstruction():
    # with the Killing gate opened, an unsolvable base field reaches the solver
    ex = get_example("twisted-U1")
    B = ex.bundle
    Y = horizontal_lift(B, ex.field("trans-x2"))
    with pytest.raises(DecompositionObstructedError):
        decompose(Y, ConnectionMetric(B), ex.solve_regions, 0.1, killing_tol=10.0)


# -- natural lift -------------------------------------------------------------------


def test_levi_civita_derivative_is_skew_for_killing_fields(frame, rng):
    g = frame.base.metric_on("north")
    x = rng.uniform(-1.5, 1.5, (30, 2))
    for name in ("rot-x", "rot-y", "rot-z"):
        m = levi_civita_derivative(frame.field(name).on("north"), x)
        npt.assert_allclose(m + np.swapaxes(m, -1, -2), 0.0, atol=1e-13)
    m = levi_civita_derivative(frame.field("dilation").on("north"), x)
    assert np.max(np.abs(m + np.swapaxes(m, -1, -2))) > 0.1
    assert g(x).shape == (30, 2, 2)


def test_natural_lift_section_is_minus_ambient_coordinate(frame, rng):
    for axis, name in enumerate(("rot-x", "rot-y", "rot-z")):
        nl = natural_lift(frame, frame.field(name), 100)
        assert nl.skew_residual <= 1e-10
        assert nl.moment_residual_max <= 1e-7
        assert nl.killing_residual <= 1e-7
        for c in frame.bundle.charts:
            x = rng.uniform(-1.8, 1.8, (30, 2))
            npt.assert_allclose(nl.section.on(c)(x), -sphere_embedding(x, c)[..., axis : axis + 1], atol=1e-13)


def test_natural_lift_rejects_non_killing(frame):
    with pytest.raises(PreconditionError):
        natural_lift(frame, frame.field("dilation"))


def test_natural_lifts_close_under_bracket(frame):
    res = lift_bracket_closure(frame)
    assert res["base"] <= 1e-12 and res["total"] <= 1e-12


# -- quantization -------------------------------------------------------------------


def test_charge_against_adaptive_quadrature(hopf, frame):
    def oracle(bundle):
        # integrate over the whole north chart, which misses a single point
        f = lambda t, r: curvature(bundle, "north", np.array([[r * np.cos(t), r * np.sin(t)]]))[0, 0, 1, 0] * r  # noqa: E731
        val, _ = integrate.dblquad(f, 0.0, np.inf, 0.0, 2 * np.pi, epsabs=1e-11)
        return val / (2 * np.pi)

    for ex, expected in ((hopf, -1.0), (frame, -2.0)):
        q = quantization_charge(ex.bundle)
        assert q == pytest.approx(oracle(ex.bundle), abs=1e-8)
        assert q == pytest.approx(expected, abs=1e-12)


def test_hamiltonian_identity_with_exact_and_solved_sections():
    q = get_example("quantized-s2")
    X = q.field("rot-z")
    ref = ScalarField({c: (lambda x, c=c: 0.5 * sphere_embedding(x, c)[..., 2]) for c in q.bundle.charts}, "Z/2")
    exact = hamiltonian_check(q, X, ambient(q, 2, -0.5), 200, reference=ref)
    assert exact["max"] <= 1e-13 and exact["reference_deviation"] <= 1e-13
    # anchored at the north-chart origin, where Z = -1
    assert exact["constant"] == pytest.approx(0.5)
    h = 0.04
    sol = solve(MomentMapProblem.for_example(q, X, h))
    solved = hamiltonian_check(q, X, sol.section, 200, reference=ref)
    assert solved["max"] <= 5 * h**2
    assert solved["reference_deviation"] <= 5 * h**2

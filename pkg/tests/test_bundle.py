import numpy as np
import numpy.testing as npt
import pytest

from gauge_killing import jet
from gauge_killing.bundle import (
    AdjointSection,
    PrincipalBundle,
    TotalTangent,
    check_compatibility,
    connection_form,
    covariant_derivative,
    curvature,
    field_gluing_residual,
    fundamental_field,
    horizontal_lift,
    right_translate,
    total_bracket,
    vertical_field,
)
from gauge_killing.catalog import example_ids, get_example
from gauge_killing.errors import ChartMismatchError, ModelInvalidError
from gauge_killing.suites import IDENTITY_TOLS, identity_residuals

ALL = example_ids()


def fd_curvature(bundle, chart, x, step=1e-5):
    """d_i A_j - d_j A_i + [A_i, A_j] with finite differences and matrix commutators."""
    grp = bundle.group
    A = bundle.A(chart)
    n = x.shape[-1]
    dA = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        dA.append((A(x + e) - A(x - e)) / (2 * step))  # [..., j, a] = d_i A_j
    dA = np.stack(dA, axis=-3)  # [..., i, j, a]
    Ahat = grp.hat(A(x))  # [..., i, m, m]
    comm = np.einsum("...imn,...jnp->...ijmp", Ahat, Ahat)
    comm = comm - np.swapaxes(comm, -3, -4)
    return dA - np.swapaxes(dA, -2, -3) + grp.vee(comm, check=True)


def matrix_coordinates_bracket(Y1, Y2, chart, x, k, step=1e-6):
    """Bracket computed in ambient (x, K) coordinates with K a full matrix.

    A field becomes (u, K hat(b)); its extension off the group is the same
    formula, which is harmless because both fields are tangent to it.
    """
    grp = Y1.bundle.group
    n = x.shape[-1]
    m = grp.matrix_size

    def ambient(Y, z):
        xx, kk = z[..., :n], z[..., n:].reshape(z.shape[:-1] + (m, m))
        t = Y(chart, xx, kk)
        return np.concatenate([t.u, (kk @ grp.hat(t.b)).reshape(z.shape[:-1] + (m * m,))], axis=-1)

    z = np.concatenate([x, k.reshape(k.shape[:-2] + (m * m,))], axis=-1)
    v1, v2 = ambient(Y1, z), ambient(Y2, z)
    d2 = (ambient(Y2, z + step * v1) - ambient(Y2, z - step * v1)) / (2 * step)
    d1 = (ambient(Y1, z + step * v2) - ambient(Y1, z - step * v2)) / (2 * step)
    br = d2 - d1
    u = br[..., :n]
    kdot = br[..., n:].reshape(k.shape)
    return TotalTangent(u, grp.vee(grp.inverse(k) @ kdot, check=False))


@pytest.mark.parametrize("eid", ALL)
def test_catalog_bundles_glue(eid):
    ex = get_example(eid)
    rep = check_compatibility(ex.bundle, 100, 0, sections=list(ex.sections.values()))
    assert rep.passed
    for name, value in rep.residuals.items():
        assert value <= 1e-12, name


@pytest.mark.parametrize("eid", ["hopf", "su2-box", "frame-s2", "twisted-U1"])
def test_curvature_against_finite_differences(eid, rng):
    B = get_example(eid).bundle
    for c in B.charts:
        x = B.base.charts[c].sample(20, rng) * 0.8
        npt.assert_allclose(curvature(B, c, x), fd_curvature(B, c, x), atol=1e-8)


def test_curvature_closed_forms(rng):
    x = rng.uniform(-1.9, 1.9, (40, 2))
    r2 = np.sum(x * x, axis=-1)
    for eid, charge in [("hopf", 1.0), ("frame-s2", 2.0)]:
        B = get_example(eid).bundle
        for c in B.charts:
            F = curvature(B, c, x)
            npt.assert_allclose(F[:, 0, 1, 0], -2.0 * charge / (1 + r2) ** 2, atol=1e-14)
            npt.assert_allclose(F[:, 1, 0, 0], 2.0 * charge / (1 + r2) ** 2, atol=1e-14)
    # su2-box: F(e1, e2) = cos(x1) E1 - sin(x1)/2 E3
    B = get_example("su2-box").bundle
    x = rng.uniform(-1.4, 1.4, (40, 2))
    expected = np.stack([np.cos(x[:, 0]), 0 * x[:, 0], -0.5 * np.sin(x[:, 0])], axis=-1)
    npt.assert_allclose(curvature(B, "box", x)[:, 0, 1], expected, atol=1e-14)


def test_curvature_is_gauge_covariant_on_overlap(hopf, frame, rng):
    for ex in (hopf, frame):
        B = ex.bundle
        tr = B.base.transition("north", "south")
        x = tr.sample(30, rng)
        v, w = rng.standard_normal((2, 30, 2))
        dv = jet.derivative(tr.forward, x, v)
        dw = jet.derivative(tr.forward, x, w)
        g = B.g("north", "south")(x)
        gi = B.group.inverse(g)
        lhs = curvature(B, "south", tr.forward(x), dv, dw)
        rhs = B.group.Ad(gi, curvature(B, "north", x, v, w))
        npt.assert_allclose(lhs, rhs, atol=1e-12)


@pytest.mark.parametrize("eid", ALL)
def test_connection_form_reproduces_generators_and_kills_lifts(eid, rng):
    ex = get_example(eid)
    B = ex.bundle
    for c in B.charts:
        x, k = B.sample(c, 30, rng)
        a = B.group.random_algebra(rng)
        npt.assert_allclose(connection_form(B, c, x, k, fundamental_field(B, a)(c, x, k)), np.broadcast_to(a, (30, B.group.dim)), atol=1e-14)
        for name in ex.base.fields:
            lift = horizontal_lift(B, ex.field(name))(c, x, k)
            npt.assert_allclose(connection_form(B, c, x, k, lift), 0.0, atol=1e-13)
            npt.assert_allclose(lift.u, ex.field(name).on(c)(x), atol=0)


def test_horizontal_lift_is_right_equivariant(su2box, rng):
    B = su2box.bundle
    Y = horizontal_lift(B, su2box.field("rot"))
    x, k = B.sample("box", 20, rng)
    h = B.group.random_element(rng)
    moved = right_translate(B, x, k, Y("box", x, k), h)
    at_kh = Y("box", x, k @ h)
    npt.assert_allclose(at_kh.u, moved.u, atol=1e-14)
    npt.assert_allclose(at_kh.b, moved.b, atol=1e-13)


@pytest.mark.parametrize("eid", ["su2-box", "hopf"])
def test_bracket_against_matrix_coordinates(eid, rng):
    ex = get_example(eid)
    B = ex.bundle
    c = B.charts[0]
    x, k = B.sample(c, 15, rng)
    x = 0.7 * x
    pairs = [
        (horizontal_lift(B, ex.field(ex.field_pairs[0][0])), horizontal_lift(B, ex.field(ex.field_pairs[0][1]))),
        (horizontal_lift(B, ex.field(ex.field_pairs[1][0])), vertical_field(B, next(iter(ex.sections.values())))),
        (fundamental_field(B, B.group.random_algebra(rng)), vertical_field(B, next(iter(ex.sections.values())))),
    ]
    for Y1, Y2 in pairs:
        got = total_bracket(Y1, Y2, c, x, k)
        ref = matrix_coordinates_bracket(Y1, Y2, c, x, k)
        npt.assert_allclose(got.u, ref.u, atol=1e-7)
        npt.assert_allclose(got.b, ref.b, atol=1e-7)


@pytest.mark.parametrize("eid", ALL)
def test_bracket_identities(eid):
    res = identity_residuals(get_example(eid), 200, 0)
    for name, value in res.items():
        assert value <= IDENTITY_TOLS[name], (name, value)


def test_covariant_derivative_abelian_is_plain_gradient(hopf, rng):
    nu = hopf.sections["exp-x"]
    x = rng.uniform(-1.5, 1.5, (10, 2))
    dnu = jet.jacobian(lambda y: nu.on("north")(y)[..., 0], x)
    npt.assert_allclose(covariant_derivative(hopf.bundle, nu, "north", x)[..., 0], dnu, atol=1e-15)


def test_lifts_glue_across_charts(hopf):
    for name in hopf.base.fields:
        assert field_gluing_residual(horizontal_lift(hopf.bundle, hopf.field(name)), "north", "south") < 1e-12


def _broken_hopf(transition):
    good = get_example("hopf").bundle
    trans = dict(good.transitions)
    trans[("north", "south")] = transition
    return PrincipalBundle("broken", good.base, good.group, good.connection, trans)


def test_model_invalid_cocycle_and_connection(hopf):
    def double_phase(x):
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        c, s = (x[..., 0] ** 2 - x[..., 1] ** 2) / r2, 2 * x[..., 0] * x[..., 1] / r2
        return jet.stack([jet.stack([c, -s], axis=-1), jet.stack([s, c], axis=-1)], axis=-2)

    with pytest.raises(ModelInvalidError) as err:
        check_compatibility(_broken_hopf(double_phase))
    assert err.value.worst in ("cocycle", "connection-gluing")
    rep = check_compatibility(_broken_hopf(double_phase), raise_on_fail=False)
    assert rep.residuals["cocycle"] > 0.1 and rep.residuals["connection-gluing"] > 0.1


def test_model_invalid_section(hopf):
    bad = AdjointSection({c: (lambda x: x[..., :1]) for c in ("north", "south")}, "x1")
    with pytest.raises(ModelInvalidError) as err:
        check_compatibility(hopf.bundle, sections=[bad])
    assert err.value.worst == "section-gluing"


def test_fields_on_different_bundles_do_not_mix(hopf, frame, rng):
    Y1 = horizontal_lift(hopf.bundle, hopf.field("rot-z"))
    Y2 = horizontal_lift(frame.bundle, frame.field("rot-z"))
    x, k = hopf.bundle.sample("north", 3, rng)
    with pytest.raises(ChartMismatchError):
        total_bracket(Y1, Y2, "north", x, k)

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp

from gauge_killing.errors import InvalidArgumentError
from gauge_killing.lie import complexify, group_from_tag, special_orthogonal, special_unitary2, unitary1

GROUPS = [unitary1(), special_orthogonal(2), special_orthogonal(3), special_unitary2()]
ids = [g.name for g in GROUPS]

PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]])


def taylor_expm(m, terms=60):
    out = np.eye(m.shape[-1])
    term = np.eye(m.shape[-1])
    for j in range(1, terms):
        term = term @ m / j
        out = out + term
    return out


def conjugation_flow(group, a, b, t=1.0):
    """Solve dM/dt = [hat a, M], M(0) = hat b; gives Ad_{exp(t a)} b."""
    A = group.hat(a)
    m0 = group.hat(b)
    n = m0.shape[0]

    def rhs(_, y):
        M = y.reshape(n, n)
        return (A @ M - M @ A).ravel()

    sol = solve_ivp(rhs, (0.0, t), m0.ravel(), rtol=1e-12, atol=1e-13, method="DOP853")
    return sol.y[:, -1].reshape(n, n)


@pytest.mark.parametrize("group", GROUPS, ids=ids)
def test_basis_lies_in_algebra_and_gram_is_identity(group):
    assert group.algebra_residual() < 1e-15
    npt.assert_allclose(group.gram, np.eye(group.dim), atol=1e-14)


@pytest.mark.parametrize("group", GROUPS, ids=ids)
def test_exp_against_taylor_series(group, rng):
    a = group.random_algebra(rng, scale=0.8)
    npt.assert_allclose(group.exp(a), taylor_expm(group.hat(a)), atol=1e-13)


def test_su2_exp_closed_form(rng):
    g = special_unitary2()
    n = rng.standard_normal(3)
    n /= np.linalg.norm(n)
    theta = 2.3
    expected = np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * np.einsum("i,imn->mn", n, PAULI)
    npt.assert_allclose(complexify(g.exp(theta * n)), expected, atol=1e-14)


def test_su2_brackets_are_cyclic():
    g = special_unitary2()
    e = np.eye(3)
    npt.assert_allclose(g.bracket(e[0], e[1]), e[2], atol=1e-15)
    npt.assert_allclose(g.bracket(e[1], e[2]), e[0], atol=1e-15)
    npt.assert_allclose(g.bracket(e[2], e[0]), e[1], atol=1e-15)


@pytest.mark.parametrize("group", GROUPS, ids=ids)
def test_adjoint_against_conjugation_flow(group, rng):
    a = group.random_algebra(rng)
    b = group.random_algebra(rng)
    got = group.hat(group.Ad(group.exp(a), b, check=True))
    npt.assert_allclose(got, conjugation_flow(group, a, b), atol=1e-10)


@pytest.mark.parametrize("group", GROUPS, ids=ids)
def test_exp_lands_in_group_and_log_inverts(group, rng):
    a = group.random_algebra(rng, 5, scale=0.3)
    k = group.exp(a)
    assert group.check_group(k) < 1e-13
    npt.assert_allclose(np.stack([group.log(ki) for ki in k]), a, atol=1e-12)


def test_log_refuses_far_from_identity():
    g = special_orthogonal(2)
    with pytest.raises(InvalidArgumentError):
        g.log(g.exp(np.array([3.0])))


def test_exp_rejects_non_finite():
    with pytest.raises(InvalidArgumentError):
        unitary1().exp(np.array([np.nan]))


@settings(max_examples=40, deadline=None)
@given(arrays(float, (3, 3), elements=st.floats(-2, 2)))
def test_jacobi_and_ad_invariance_su2(vals):
    g = special_unitary2()
    a, b, c = vals
    jacobi = g.bracket(a, g.bracket(b, c)) + g.bracket(b, g.bracket(c, a)) + g.bracket(c, g.bracket(a, b))
    npt.assert_allclose(jacobi, 0.0, atol=1e-12)
    k = g.exp(c)
    npt.assert_allclose(g.inner(g.Ad(k, a), g.Ad(k, b)), g.inner(a, b), atol=1e-12)
    # ad is skew for the inner product
    npt.assert_allclose(g.inner(g.bracket(c, a), b), -g.inner(a, g.bracket(c, b)), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (2, 3), elements=st.floats(-1.5, 1.5)))
def test_ad_matrix_is_a_homomorphism(vals):
    g = special_orthogonal(3)
    k1, k2 = g.exp(vals[0]), g.exp(vals[1])
    npt.assert_allclose(g.Ad_matrix(k1 @ k2), g.Ad_matrix(k1) @ g.Ad_matrix(k2), atol=1e-12)


def test_group_from_tag():
    assert group_from_tag("u1").dim == 1
    assert group_from_tag("su2").dim == 3
    assert group_from_tag("so", 3).name == "SO(3)"
    with pytest.raises(InvalidArgumentError):
        group_from_tag("so", 2)
    with pytest.raises(InvalidArgumentError):
        group_from_tag("sp")


def test_group_residual_detects_non_members():
    g = special_unitary2()
    assert g.group_residual(2.0 * np.eye(4)) > 1.0
    with pytest.raises(InvalidArgumentError):
        g.check_group(np.diag([1.0, 1.0, -1.0, -1.0]) @ np.diag([1, -1, 1, -1.0]))

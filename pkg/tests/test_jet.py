"""Forward-mode jets checked against closed-form and finite-difference derivatives."""

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gauge_killing import jet

finite = st.floats(-2.0, 2.0, allow_nan=False)


def central_difference(f, x, v, step=1e-6):
    return (f(x + step * v) - f(x - step * v)) / (2 * step)


@pytest.mark.parametrize(
    "fn, dfn",
    [
        (jet.sin, np.cos),
        (jet.cos, lambda t: -np.sin(t)),
        (jet.exp, np.exp),
        (jet.tan, lambda t: 1.0 / np.cos(t) ** 2),
    ],
)
def test_elementary_derivatives(fn, dfn):
    x = np.linspace(-1.2, 1.2, 17)
    npt.assert_allclose(jet.derivative(fn, x, np.ones_like(x)), dfn(x), rtol=1e-14, atol=1e-14)


def test_log_and_sqrt():
    x = np.linspace(0.3, 4.0, 11)
    npt.assert_allclose(jet.derivative(jet.log, x, np.ones_like(x)), 1.0 / x, rtol=1e-14)
    npt.assert_allclose(jet.derivative(jet.sqrt, x, np.ones_like(x)), 0.5 / np.sqrt(x), rtol=1e-14)


@given(finite, finite, finite, finite)
def test_product_quotient_chain_rule(a, b, u, w):
    def f(x):
        return jet.sin(x[..., 0] * x[..., 1]) / (2.0 + x[..., 0] ** 2) + jet.exp(x[..., 1]) * x[..., 0]

    x = np.array([a, b])
    v = np.array([u, w])
    exact = jet.derivative(f, x, v)
    npt.assert_allclose(exact, central_difference(f, x, v), atol=1e-6 * (1 + np.abs(v).sum()))


def test_nested_jets_give_second_derivatives():
    # d^2/dx1 dx2 of sin(x1) x2^3 = 3 cos(x1) x2^2
    def f(x):
        return jet.sin(x[..., 0]) * x[..., 1] ** 3

    x = np.array([[0.4, -1.1], [1.3, 0.2]])
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    mixed = jet.derivative(lambda y: jet.derivative(f, y, e2), x, e1)
    npt.assert_allclose(mixed, 3 * np.cos(x[:, 0]) * x[:, 1] ** 2, rtol=1e-14)


def test_closure_over_outer_jet_is_not_confused():
    # f(x) = x * d/dy (x y)|_{y=1} = x^2 ; its derivative is 2x, not x
    def f(x):
        return x * jet.derivative(lambda y: x * y, np.array(1.0), np.array(1.0))

    npt.assert_allclose(jet.derivative(f, np.array(1.5), np.array(1.0)), 3.0)


def test_jacobian_matches_finite_differences(rng):
    A = rng.standard_normal((3, 2))

    def f(x):
        return jet.einsum("ij,...j->...i", A, x) + jet.sin(x[..., :1])

    x = rng.standard_normal((5, 2))
    J = jet.jacobian(f, x)
    assert J.shape == (5, 3, 2)
    for j in range(2):
        v = np.zeros(2)
        v[j] = 1.0
        npt.assert_allclose(J[..., j], central_difference(f, x, v), atol=1e-8)


def test_expm_derivative_matches_finite_differences(rng):
    a = rng.standard_normal((4, 4))
    da = rng.standard_normal((4, 4))
    npt.assert_allclose(jet.derivative(jet.expm, a, da), central_difference(jet.expm, a, da), atol=1e-7)


def test_inverse_derivative(rng):
    m = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    dm = rng.standard_normal((3, 3))
    npt.assert_allclose(jet.derivative(jet.inv, m, dm), central_difference(np.linalg.inv, m, dm), atol=1e-8)

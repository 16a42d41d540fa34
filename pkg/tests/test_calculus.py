import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trudinger.calculus import (Exponents, Jet, PowerRadialParams, RadialProfile, kp_form,
                                kp_lambda_form, lp_form, power_profile, power_radial_residual,
                                radial_jet, radial_plaplacian, tp_form)
from trudinger.errors import DomainError, InvalidInputError


@pytest.mark.parametrize("q, X, p, expected", [
    ([0.0, 0.0], np.diag([5.0, 7.0]), 3, 0.0),
    ([3.0, 4.0], np.eye(2), 2, 2.0),
    ([1.0, 0.0], np.diag([0.7, -1.3]), 4, 3 * 0.7 - 1.3),
])
def test_lp_form_examples(q, X, p, expected):
    assert lp_form(np.array(q), X, Exponents(p, 2)) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("r, jet, p, expected", [
    (5.0, Jet(1.0, np.zeros(3), np.eye(3)), 2, 2.0),
    (2.0, Jet(1.0, [1.0, 0.0], np.diag([1.0, 0.0])), 3, -2.0),
    (7.0, Jet.zero(2), 3.5, 0.0),
])
def test_tp_form_examples(r, jet, p, expected):
    assert tp_form(r, jet, Exponents(p, len(jet.q))) == pytest.approx(expected, abs=1e-14)


def test_kp_form_examples():
    assert kp_form(Jet(1.0, np.zeros(2), np.zeros((2, 2))), Exponents(3, 2)) == pytest.approx(-2.0)
    assert kp_form(Jet(0.0, [1.0, 0.0], np.eye(2)), Exponents(2, 2)) == pytest.approx(3.0)


def test_kp_lambda_examples():
    e2, e3 = Exponents(2, 2), Exponents(3, 2)
    assert kp_lambda_form(Jet(0.0, [1.0, 0.0], np.zeros((2, 2))), 0.5, e2) == pytest.approx(0.5)
    assert kp_lambda_form(Jet(1.0, np.zeros(2), 2 * np.eye(2)), 0.1, e3) == pytest.approx(-2.0)


@pytest.mark.parametrize("p, expected", [(2, 4.0), (3, 12.0)])
def test_radial_plaplacian_r_squared(p, expected):
    assert radial_plaplacian(RadialProfile(1.0, 2.0, 2.0, 1.0), Exponents(p, 2)) == pytest.approx(expected)


def test_radial_plaplacian_constant_and_bad_radius():
    assert radial_plaplacian(RadialProfile(3.0, 0.0, 0.0, 0.4), Exponents(3, 2)) == 0.0
    with pytest.raises(DomainError):
        radial_plaplacian(RadialProfile(1.0, 1.0, 1.0, 0.0), Exponents(3, 2))


def test_power_radial_zero_lambda_choice():
    e = Exponents(4, 2)
    r = np.linspace(0.1, 3.0, 17)
    assert np.allclose(power_radial_residual(PowerRadialParams(1.3, 2 / 3), r, e), 0.0, atol=1e-14)
    assert np.allclose(power_radial_residual(PowerRadialParams(1.3, 2 / 3, sign=-1), r, e), 0.0, atol=1e-14)


def test_power_radial_matches_radial_plaplacian():
    e = Exponents(2, 3)
    assert power_radial_residual(PowerRadialParams(1.0, 1.0), 1.0, e) == pytest.approx(2.0)
    for r in (0.3, 1.0, 2.5):
        pr = PowerRadialParams(0.7, 1.6)
        assert power_radial_residual(pr, r, e) == pytest.approx(radial_plaplacian(power_profile(pr, r), e))


def test_bad_inputs():
    with pytest.raises(InvalidInputError):
        Exponents(1.5, 2)
    with pytest.raises(InvalidInputError):
        Jet(0.0, [1.0, 0.0], np.array([[1.0, 2.0], [0.0, 1.0]]))


jets = st.tuples(
    st.floats(-3, 3),
    st.lists(st.floats(-2, 2), min_size=2, max_size=2),
    st.lists(st.floats(-2, 2), min_size=3, max_size=3),
)


def _jet(t):
    a, q, (x11, x12, x22) = t
    return Jet(a, np.array(q), np.array([[x11, x12], [x12, x22]]))


@settings(max_examples=200, deadline=None)
@given(jets, st.floats(0.1, 4.0), st.sampled_from([2.0, 2.5, 3.0, 4.0]))
def test_lp_homogeneity(t, s, p):
    # L_p(s q, s X) = s^(p-1) L_p(q, X)
    j = _jet(t)
    e = Exponents(p, 2)
    lhs = lp_form(s * j.q, s * j.X, e)
    rhs = s ** (p - 1) * lp_form(j.q, j.X, e)
    scale = s ** (p - 1) * (np.linalg.norm(j.q) ** (p - 2) * np.abs(j.X).sum() + 1)
    assert abs(lhs - rhs) <= 1e-12 * scale


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.sampled_from([2.0, 3.0, 3.7]))
def test_plane_wave_jet_is_a_solution(q, p):
    q = np.array(q)
    e = Exponents(p, 3)
    a = np.linalg.norm(q) ** p
    val = kp_form(Jet(a, q, np.zeros((3, 3))), e)
    assert abs(val) <= 1e-12 * (1 + a)


def test_radial_jet_matches_finite_differences(rng):
    center = np.array([0.2, -0.1])
    f = lambda x: np.linalg.norm(x - center) ** 1.5
    x = np.array([0.9, 0.4])
    r = np.linalg.norm(x - center)
    q, X = radial_jet(1.5 * r**0.5, 0.75 * r**-0.5, x, center)
    h = 1e-5
    I = np.eye(2)
    qfd = np.array([(f(x + h * I[i]) - f(x - h * I[i])) / (2 * h) for i in range(2)])
    Xfd = np.array([[(f(x + h * I[i] + h * I[j]) - f(x + h * I[i] - h * I[j]) - f(x - h * I[i] + h * I[j])
                      + f(x - h * I[i] - h * I[j])) / (4 * h * h) for j in range(2)] for i in range(2)])
    assert np.allclose(q, qfd, atol=1e-9)
    assert np.allclose(X, Xfd, atol=1e-5)

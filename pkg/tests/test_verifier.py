import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import flat_problem, smooth_problem
from trudinger.barriers import (EXTERIOR, ConstantBarrier, make_barrier, make_side_sub_highp,
                                make_side_sub_lowp, make_side_super_highp)
from trudinger.calculus import Exponents, Jet
from trudinger.errors import DomainError
from trudinger.problem import SpaceTimePoint
from trudinger.verifier import (log_equiv_check, residual_at, residuals, ridge_check,
                                scaling_check, separation_check, sweep)

Y2 = np.array([1.0, 0.0])
Y3 = np.array([1.0, 0.0, 0.0])
N = 2000


def test_exterior_residual_is_zero():
    b = make_side_sub_highp(flat_problem(3, 2), Y2, 0.5, 0.25, tau=1.0)
    x, t = b.sample_pieces(200, flat_problem(3, 2).domain, 1.0)[EXTERIOR]
    res, _ = residuals(b, x, t)
    assert np.all(res == 0.0)


def test_highp_sub_residual_closed_form():
    # with Lambda = 0 the p-Laplacian of -c r^gamma vanishes, leaving (p-1)((c gamma)^p r^(p(gamma-1)) - a)
    b = make_side_sub_highp(flat_problem(3, 2), Y2, 0.5, 0.25, tau=1.0)
    pr, p = b.params, 3.0
    slopes = set()
    for label, (x, t) in b.sample_pieces(300, flat_problem(3, 2).domain, 1.0, seed=2).items():
        if label == EXTERIOR:
            continue
        res, scale = residuals(b, x, t)
        a = b.jet(x, t).a
        r = np.linalg.norm(x - Y2, axis=1)
        expected = (p - 1) * ((pr.c * pr.gamma) ** p * r ** (p * (pr.gamma - 1)) - a)
        assert np.allclose(res, expected, rtol=1e-10, atol=1e-10 * scale.max())
        assert np.all(res >= -1e-9 * scale)
        slopes.update(np.round(a / pr.k, 12).tolist())
    assert slopes == {-1.0, 1.0}


def test_residual_at_single_point():
    b = make_side_sub_highp(flat_problem(3, 2), Y2, 0.5, 0.25, tau=1.0)
    s = residual_at(b, SpaceTimePoint([0.9, 0.05], 0.45))
    assert s.passed and s.piece != EXTERIOR


CASES = [
    ("initial_sub", 3, 2, np.array([0.3, 0.0]), 0.0),
    ("initial_super", 2, 2, np.array([0.0, 1.0]), 0.0),
    ("side_sub_highp", 3, 2, Y2, 0.5),
    ("side_super_highp", 4, 2, Y2, 0.5),
    ("side_sub_lowp", 2, 3, Y3, 0.5),
    ("side_super_lowp", 2, 2, Y2, 0.5),
]


@pytest.mark.parametrize("family, p, n, y, s", CASES)
def test_sweep_certifies_constructed_barriers(family, p, n, y, s):
    prob = smooth_problem(p, n)
    b = make_barrier(prob, family, y, s, 0.05)
    rep = sweep(b, prob, n_per_piece=N, n_boundary=N, n_ridge=200)
    assert rep.passed, rep.failures()
    assert rep.samples >= N


def test_constant_barrier_passes_with_zero_residuals():
    from trudinger.problem import Ball, BoundaryDatum, CylinderProblem
    prob = CylinderProblem(Ball([0, 0], 1.0), 1.0, Exponents(3, 2), BoundaryDatum.constant(2.0))
    b = make_barrier(prob, "side_sub_highp", Y2, 0.5, 0.25)
    assert isinstance(b, ConstantBarrier)
    rep = sweep(b, prob, n_per_piece=N, n_boundary=N)
    assert rep.passed
    assert all(st["min"] == 0 and st["max"] == 0 for st in rep.pieces.values() if st["count"])


def test_halved_c_is_caught():
    prob = smooth_problem(3, 2)
    good = make_side_sub_highp(prob, Y2, 0.5, 0.05)
    bad = make_side_sub_highp(prob, Y2, 0.5, 0.05, c=good.params.c_min / 2)
    rep = sweep(bad, prob, n_per_piece=N, n_boundary=N, n_ridge=200)
    assert not rep.passed
    assert min(st["min"] for k, st in rep.pieces.items() if k != EXTERIOR and st["count"]) < 0


def test_oversized_rho_is_caught():
    prob = smooth_problem(2, 2)
    good = make_side_sub_lowp(prob, Y2, 0.5, 0.05)
    bad = make_side_sub_lowp(prob, Y2, 0.5, 0.05, rho=2 * good.params.rho_cap)
    assert not sweep(bad, prob, n_per_piece=N, n_boundary=N, n_ridge=200).passed


@pytest.mark.parametrize("family, p", [("side_sub_highp", 3), ("side_super_highp", 4)])
def test_ridge_check(family, p):
    prob = flat_problem(p, 2)
    b = make_barrier(prob, family, Y2, 0.5, 0.25, tau=1.0)
    x, t = b.ridge_samples(300, seed=1)
    res = ridge_check(b, x, t)
    assert res.passed, res.metrics
    with pytest.raises(DomainError):
        ridge_check(b, -Y2[None], [0.5])


def test_ridge_check_lowp_super():
    prob = flat_problem(2, 3)
    b = make_barrier(prob, "side_super_lowp", Y3, 0.5, 0.25, tau=1.0)
    x, t = b.ridge_samples(300, seed=1)
    assert ridge_check(b, x, t).passed


def test_ridge_rejects_non_cusp():
    b = make_barrier(smooth_problem(3, 2), "initial_sub", np.zeros(2), 0.0, 0.05)
    with pytest.raises(DomainError):
        ridge_check(b, np.zeros((1, 2)))


# -- jet identities -------------------------------------------------------------------------


def test_log_equivalence_examples():
    e = Exponents(3, 2)
    q = np.array([0.6, -0.8])
    err, _ = log_equiv_check(0.3, Jet(np.linalg.norm(q) ** 3, q, np.zeros((2, 2))), e)
    assert err <= 1e-13
    err, _ = log_equiv_check(-1.2, Jet.zero(2), e)
    assert err == 0.0


sym = st.lists(st.floats(-2, 2), min_size=6, max_size=6)


@settings(max_examples=200, deadline=None)
@given(st.floats(-2, 2), st.floats(-3, 3), st.lists(st.floats(-2, 2), min_size=3, max_size=3), sym,
       st.sampled_from([2.0, 2.5, 3.0, 5.0]))
def test_log_equivalence_random_jets(eta, a, q, xs, p):
    X = np.array([[xs[0], xs[1], xs[2]], [xs[1], xs[3], xs[4]], [xs[2], xs[4], xs[5]]])
    err, scale = log_equiv_check(eta, Jet(a, np.array(q), X), Exponents(p, 3))
    assert err <= 1e-10 * (scale + 1e-300)


def test_scaling_examples():
    e3, e2 = Exponents(3, 2), Exponents(2, 2)
    jet = Jet(0.4, [1.0, -0.5], np.array([[0.3, 0.1], [0.1, -0.2]]))
    assert scaling_check(jet, 1.0, e3)[0] == 0.0
    q = np.array([0.3, 0.4])
    err, _ = scaling_check(Jet(np.linalg.norm(q) ** 3, q, np.zeros((2, 2))), 2.0, e3)
    assert err <= 1e-12
    err, _ = scaling_check(Jet(1.0, [0.2, 0.0], np.diag([2.0, 0.0])), 0.5, e2)
    assert err <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-2, 2), st.lists(st.floats(-2, 2), min_size=2, max_size=2),
       st.floats(-1, 1), st.sampled_from([2.0, 3.0, 4.5]))
def test_scaling_random(alpha, a, q, xx, p):
    jet = Jet(a, np.array(q), np.array([[xx, 0.2], [0.2, -xx]]))
    err, scale = scaling_check(jet, alpha, Exponents(p, 2))
    assert err <= 1e-10 * (scale + 1)


def test_separation_sine_is_exact():
    # phi = sin(x1) solves Delta phi + phi = 0, so phi exp(-t) solves the heat equation
    e = Exponents(2, 2)
    for x1 in (0.4, 1.3, 2.5):
        phi = math.sin(x1)
        q, X = np.array([math.cos(x1), 0.0]), np.diag([-math.sin(x1), 0.0])
        assert separation_check(phi, q, X, 1.0, -1.0, 0.7, e) == pytest.approx(0.0, abs=1e-14)
        assert separation_check(phi, q, X, 1.0, -1.5, 0.7, e) > 0
        assert separation_check(phi, q, X, 1.0, -0.5, 0.7, e) < 0


def test_separation_equality_case_p3():
    # phi = c r^gamma with Delta_p phi + lam phi^(p-1) = 0 only at equality, so use a
    # constant phi (Delta_p phi = 0) with lam = 0 and ell = 0: residual exactly 0
    e = Exponents(3, 2)
    assert separation_check(1.7, np.zeros(2), np.zeros((2, 2)), 0.0, 0.0, 0.3, e) == 0.0

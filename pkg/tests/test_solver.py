import csv
import json
import math

import numpy as np
import pytest

from conftest import smooth_problem
from trudinger.barriers import ConstantBarrier, make_barrier
from trudinger.calculus import Exponents
from trudinger.errors import DivergenceError, DomainError, InvalidInputError, StepRejectedError
from trudinger.problem import Ball, BoundaryDatum, Box, CylinderProblem, SpaceTimePoint
from trudinger.solver import (BOUNDARY, EXTERIOR, INTERIOR, Grid, GridField, SolveConfig,
                              barrier_sandwich_report, cfl_dt, comparison_report,
                              constant_solution, convergence_study, discrete_kp, discrete_kp_all,
                              heat_solution, initial_field, max_error, max_principle_report,
                              plane_wave, shift_report, solve, step, write_manifest,
                              write_orders_csv, write_snapshots_csv)
from trudinger.verifier import sweep

UNIT_BOX = Box([0.0, 0.0], [1.0, 1.0])


def field_from(grid, f):
    eta = np.full(len(grid.coords), np.nan)
    eta[grid.active] = f(grid.coords[grid.active])
    return GridField(grid, eta, 0.0)


@pytest.mark.parametrize("layout", ["vertex", "cell"])
@pytest.mark.parametrize("dom", [UNIT_BOX, Ball([0, 0], 1.0), Ball([0, 0, 0], 1.0)])
def test_grid_masks(dom, layout):
    g = Grid.from_spacing(dom, 0.125, layout)
    assert set(np.unique(g.mask)) <= {EXTERIOR, BOUNDARY, INTERIOR}
    assert np.all(dom.contains(g.coords[g.interior], strict=True))
    assert np.all(~dom.contains(g.coords[g.boundary], strict=True))
    assert np.all(dom.on_boundary(g.projection, tol=1e-9))
    for s in g.strides:
        assert np.all(g.mask[g.interior + s] != EXTERIOR)
        assert np.all(g.mask[g.interior - s] != EXTERIOR)


def test_grid_rejects_bad_layout():
    with pytest.raises(InvalidInputError):
        Grid(UNIT_BOX, [8, 8], "staggered")


def test_discrete_operator_constant_affine_quadratic():
    g = Grid(UNIT_BOX, [10, 10])
    assert np.all(discrete_kp_all(field_from(g, lambda x: np.full(len(x), 0.7)), Exponents(3, 2)) == 0)
    a = np.array([0.3, -0.4])
    for p in (2.0, 3.0, 4.5):
        vals = discrete_kp_all(field_from(g, lambda x: x @ a), Exponents(p, 2))
        assert np.allclose(vals, (p - 1) * np.linalg.norm(a) ** p, rtol=1e-12)
    vals = discrete_kp_all(field_from(g, lambda x: x[:, 0] ** 2), Exponents(2, 2))
    x1 = g.coords[g.interior][:, 0]
    assert np.allclose(vals, 2 + 4 * x1**2, atol=1e-12)  # Delta + |D|^2 with p = 2
    node = g.interior[7]
    f = field_from(g, lambda x: x[:, 0] ** 2)
    assert discrete_kp(f, node, Exponents(2, 2)) == pytest.approx(vals[7])
    with pytest.raises(DomainError):
        discrete_kp(f, g.boundary[0], Exponents(2, 2))


def test_cfl_examples():
    g = Grid(UNIT_BOX, [100, 100])
    assert cfl_dt(g, SolveConfig(safety=0.5, G=1.0), Exponents(2, 2)) == pytest.approx(1.25e-5, rel=1e-12)
    h = 0.01
    assert cfl_dt(g, SolveConfig(safety=0.4, G=1.0), Exponents(3, 2)) == pytest.approx(0.4 * min(h * h / 4, h / 3))
    dts = [cfl_dt(g, SolveConfig(G=G), Exponents(3, 2)) for G in (1, 10, 100, 1000)]
    assert all(b < a for a, b in zip(dts, dts[1:]))


def test_step_rejects_oversized_dt():
    prob = CylinderProblem(UNIT_BOX, 1.0, Exponents(3, 2), BoundaryDatum.constant(2.0))
    g = Grid(UNIT_BOX, [10, 10])
    cfg = SolveConfig(G=1.0)
    f0 = initial_field(prob, g)
    with pytest.raises(StepRejectedError):
        step(f0, 2 * cfl_dt(g, cfg, prob.e), prob, cfg)
    f1 = step(f0, cfl_dt(g, cfg, prob.e), prob, cfg)
    assert np.allclose(f1.eta[g.active], math.log(2.0))


def test_plane_wave_step_is_exact_on_vertex_grids():
    a = np.array([0.5, -0.25])
    ex = plane_wave(a, 3.0)
    prob = ex.problem(UNIT_BOX, 1.0)
    g = Grid(UNIT_BOX, [12, 12])
    cfg = SolveConfig(G=1.0)
    f0 = initial_field(prob, g)
    dt = cfl_dt(g, cfg, prob.e)
    f1 = step(f0, dt, prob, cfg)
    x = g.coords[g.interior]
    assert np.allclose(f1.eta[g.interior], ex.eta(x, np.full(len(x), dt)), atol=1e-13)


def test_constant_solution_has_zero_error_and_margins():
    ex = constant_solution(1.7, 3.0)
    study = convergence_study(ex, Ball([0, 0], 1.0), 0.2, [8, 16])
    for row in study["rows"]:
        assert row["error"] == pytest.approx(0.0, abs=1e-14)
        assert row["max_principle"]["excess"] <= 1e-14


def test_heat_benchmark_second_order():
    dom = Box([0.0, 0.0], [math.pi, 1.0])
    study = convergence_study(heat_solution(), dom, 0.5, [16, 32, 64])
    orders = [r["order"] for r in study["rows"][1:]]
    assert all(o == pytest.approx(2.0, abs=0.3) for o in orders)
    errors = [r["error"] for r in study["rows"]]
    assert errors[-1] < errors[0] / 10


def test_plane_wave_p3_cell_layout_converges():
    a = 0.5 * np.array([math.cos(0.3), math.sin(0.3)])
    study = convergence_study(plane_wave(a, 3.0), UNIT_BOX, 0.25, [8, 16, 32], layout="cell")
    errors = [r["error"] for r in study["rows"]]
    assert errors[0] > errors[1] > errors[2]
    assert all(r["order"] >= 0.8 for r in study["rows"][1:])


def test_max_principle_plane_wave():
    ex = plane_wave([0.4, 0.2], 3.0)
    prob = ex.problem(UNIT_BOX, 0.3)
    traj = solve(prob, Grid.from_spacing(UNIT_BOX, 1 / 16), SolveConfig(n_snapshots=3))
    rep = max_principle_report(traj)
    assert rep["excess"] <= 1e-12 * rep["M"]


def test_comparison_and_shift():
    dom = Ball([0, 0], 1.0)
    e = Exponents(3, 2)
    base = lambda x, t: 2 + 0.5 * np.sin(x.sum(axis=1)) * np.cos(t)
    mk = lambda h, b: CylinderProblem(dom, 0.3, e, BoundaryDatum.from_space_time(h, b))
    g = Grid.from_spacing(dom, 1 / 16)
    cfg = SolveConfig(G=1.0, n_snapshots=3)
    tu = solve(mk(base, (1.5, 2.5)), g, cfg)
    tv = solve(mk(lambda x, t: base(x, t) + 1, (2.5, 3.5)), g, cfg)
    assert comparison_report(tu, tv)["pass"]
    assert comparison_report(tu, tu)["quotient_interior"] == pytest.approx(1.0)
    tc = solve(mk(lambda x, t: 3 * base(x, t), (4.5, 7.5)), g, cfg)
    assert shift_report(tu, tc, 3.0)["max_deviation"] <= 1e-12
    other = solve(mk(base, (1.5, 2.5)), Grid.from_spacing(dom, 1 / 8), cfg)
    with pytest.raises(InvalidInputError):
        comparison_report(tu, other)


def test_constant_sandwich_chain():
    prob = CylinderProblem(Ball([0, 0], 1.0), 0.3, Exponents(3, 2), BoundaryDatum.constant(2.0))
    traj = solve(prob, Grid.from_spacing(prob.domain, 1 / 8), SolveConfig(n_snapshots=2))
    anchor = SpaceTimePoint([1.0, 0.0], 0.15)
    sub = ConstantBarrier(2.0 - 0.5, "sub", anchor, prob.e)
    sup = ConstantBarrier(2.0 + 0.5, "super", anchor, prob.e)
    rep = barrier_sandwich_report(traj, sub, sup, (np.array([1.0, 0.0]), 0.15), 0.25, 0.0)
    assert rep["pass"]
    assert rep["max_sub_excess"] == pytest.approx(math.log(1.5 / 2))


def test_corrupted_super_barrier_is_flagged():
    prob = smooth_problem(3, 2, T=1.0)
    y = np.array([1.0, 0.0])
    good = make_barrier(prob, "side_super_highp", y, 0.5, 0.05)
    bad = make_barrier(prob, "side_super_highp", y, 0.5, 0.05, c=good.params.c_min / 2)
    rep = sweep(bad, prob, n_per_piece=2000, n_boundary=2000, n_ridge=200)
    assert not rep.passed  # caught before any sandwich comparison
    assert "parameters" in rep.failures()
    with pytest.raises(InvalidInputError):
        barrier_sandwich_report(None, None, bad, (y, 0.5), 0.05, 0.0, verified=False)


def test_divergence_on_exhausted_budget():
    prob = CylinderProblem(UNIT_BOX, 1.0, Exponents(3, 2), BoundaryDatum.constant(2.0))
    with pytest.raises(DivergenceError) as info:
        solve(prob, Grid(UNIT_BOX, [10, 10]), SolveConfig(max_steps=5))
    assert info.value.step == 5


def test_snapshot_times_and_exports(tmp_path):
    ex = plane_wave([0.3, 0.1], 2.5)
    prob = ex.problem(UNIT_BOX, 0.2)
    cfg = SolveConfig(n_snapshots=4, snapshot_times=(0.07,))
    traj = solve(prob, Grid(UNIT_BOX, [10, 10]), cfg)
    assert np.allclose(traj.times, [0.0, 0.05, 0.07, 0.1, 0.15, 0.2], atol=1e-14)
    assert traj.final.t == pytest.approx(0.2, abs=1e-14)
    assert max_error(traj, ex, "eta") <= 1e-12
    write_snapshots_csv(traj, tmp_path / "s.csv")
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert len(rows) == len(traj.snapshots) * len(traj.grid.active)
    write_manifest(traj, cfg, tmp_path / "m.json")
    assert json.loads((tmp_path / "m.json").read_text())["config"]["safety"] == 0.4
    study = convergence_study(ex, UNIT_BOX, 0.1, [8, 16, 32])
    write_orders_csv(study, tmp_path / "o.csv")
    assert len(list(csv.DictReader(open(tmp_path / "o.csv")))) == 3

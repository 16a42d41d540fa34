"""The acceptance matrix, shared by the test suite and the ``suite`` command.

Each criterion returns a :class:`CriterionResult` with its measured metrics,
wall-clock runtime and the runtime budget it is held to.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .barriers import EXTERIOR, make_barrier, make_side_sub_highp, make_side_sub_lowp, make_side_super_highp
from .calculus import (Exponents, Jet, PowerRadialParams, RadialProfile, lp_form, power_profile,
                       power_radial_residual, radial_jet, radial_plaplacian, _abs_pow)
from .problem import Annulus, Ball, Box, BoundaryDatum, CylinderProblem
from .solver import (Grid, SolveConfig, barrier_sandwich_report, comparison_report, convergence_study,
                     heat_solution, max_error, plane_wave, shift_report, solve)
from .verifier import log_equiv_check, scaling_check, sweep

EPS_REL = 1e-12


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    runtime: float = 0.0
    budget: Optional[float] = None

    @property
    def within_budget(self) -> bool:
        return self.budget is None or self.runtime < self.budget

    @property
    def ok(self) -> bool:
        return bool(self.passed and self.within_budget)

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        budget = f" (budget {self.budget:.0f} s)" if self.budget else ""
        return f"[{status}] criterion {self.number}: {self.name} | {self.summary()} | {self.runtime:.2f} s{budget}"

    def summary(self) -> str:
        keys = self.metrics.get("_summary", [])
        return ", ".join(f"{k}={_fmt(self.metrics[k])}" for k in keys)

    def to_dict(self):
        m = {k: v for k, v in self.metrics.items() if k != "_summary"}
        return {"name": f"criterion_{self.number}", "pass": self.ok,
                "metrics": {**m, "runtime_s": self.runtime, "budget_s": self.budget,
                            "description": self.name}}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _timed(number, name, budget, fn):
    t0 = time.perf_counter()
    passed, metrics = fn()
    return CriterionResult(number, name, bool(passed), metrics, time.perf_counter() - t0, budget)


SMOOTH_DATUM = "2 + 0.5 sin(x1 + x2) cos(t)"


def smooth_datum(x, t):
    return 2.0 + 0.5 * np.sin(x[:, 0] + x[:, 1]) * np.cos(t)


# -- 1 ----------------------------------------------------------------------------------------


def algebraic_identities():
    """Radial p-Laplacian of r^2 and the power-radial identity against direct differentiation."""
    r = np.geomspace(0.1, 10.0, 120)
    worst_sq, worst_pow = 0.0, 0.0
    for p in (2.0, 2.5, 3.0, 4.0, 6.0):
        for n in (2, 3):
            e = Exponents(p, n)
            for ri in r:
                got = radial_plaplacian(RadialProfile(ri * ri, 2 * ri, 2.0, ri), e)
                want = e.sigma_p * 2 ** (p - 1) * ri ** (p - 2)
                worst_sq = max(worst_sq, abs(got - want) / abs(want))
            x = np.zeros((len(r), n))
            x[:, 0] = r / math.sqrt(2)
            x[:, 1] = r / math.sqrt(2)
            for c, gamma, sign, lam in ((1.0, 0.5, 1, 0.0), (2.0, -1.5, -1, 0.7), (0.3, 2.0, 1, 1.0),
                                        (1.7, (p - n) / (p - 1) or 0.25, -1, 0.0), (0.8, 1.0, -1, 2.5)):
                params = PowerRadialParams(c, gamma, sign, lam)
                closed = power_radial_residual(params, r, e)
                prof = [power_profile(params, ri) for ri in r]
                d1 = np.array([pp.d1 for pp in prof])
                d2 = np.array([pp.d2 for pp in prof])
                q, X = radial_jet(d1, d2, x, np.zeros(n))
                direct = lp_form(q, X, e) + lam * (p - 1) * _abs_pow(d1, p)
                radial = np.array([radial_plaplacian(pp, e) for pp in prof]) + lam * (p - 1) * _abs_pow(d1, p)
                # relative to the term magnitudes: the two terms cancel when Lambda is near 0
                mag = (p - 1) * c ** (p - 1) * abs(gamma) ** p * r ** (p * (gamma - 1)) * (
                    c * abs(lam) + abs((p - n) / (p - 1) - gamma) / (abs(gamma) * r**gamma))
                mag = np.maximum(mag, _abs_pow(d1, p - 2) * ((p - 1) * np.abs(d2) + (n - 1) * np.abs(d1) / r))
                err = np.maximum(np.abs(closed - direct), np.abs(closed - radial)) / mag
                worst_pow = max(worst_pow, float(err.max()))
    ok = worst_sq <= EPS_REL and worst_pow <= EPS_REL
    return ok, {"max_rel_error_r2_identity": worst_sq, "max_rel_error_power_identity": worst_pow,
                "_summary": ["max_rel_error_r2_identity", "max_rel_error_power_identity"]}


# -- 2 and 3 ----------------------------------------------------------------------------------

SIDE_HIGHP = ("side_sub_highp", "side_super_highp")
SIDE_LOWP = ("side_sub_lowp", "side_super_lowp")
INITIAL = ("initial_sub", "initial_super")
REGIMES = ((3.0, 2, SIDE_HIGHP + INITIAL), (4.0, 2, SIDE_HIGHP + INITIAL),
           (2.0, 2, SIDE_LOWP + INITIAL), (2.0, 3, SIDE_LOWP + INITIAL), (2.5, 3, SIDE_LOWP + INITIAL))


def _domain(kind, n):
    return Ball(np.zeros(n), 1.0) if kind == "ball" else Annulus(np.zeros(n), 0.5, 1.0)


def _direction(angle, n):
    d = np.zeros(n)
    d[0], d[1] = math.cos(angle), math.sin(angle)
    return d


def anchors(kind, n, family):
    """Three anchors per family: lateral points at three times, or two boundary and one interior point."""
    dirs = [_direction(a, n) for a in (0.3, 1.7, 4.0)]
    if kind == "ball":
        side = [d for d in dirs]
        interior = 0.3 * dirs[2]
    else:
        side = [dirs[0], dirs[1], 0.5 * dirs[2]]
        interior = 0.75 * dirs[2]
    if family.startswith("initial"):
        return [(side[0], 0.0), (side[1], 0.0), (interior, 0.0)]
    return [(side[0], 0.5), (side[1], 1.0), (side[2], 1.5)]


def make_problem(p, n, domain, T=2.0, n_samples=20_000):
    return CylinderProblem(domain, T, Exponents(p, n), BoundaryDatum.from_space_time(smooth_datum),
                           n_samples=n_samples)


def certification_matrix(n_per_piece=10_000, eps=0.05):
    reports, failures, min_samples = [], [], math.inf
    worst_sub, worst_super = math.inf, math.inf
    for kind in ("ball", "annulus"):
        for p, n, families in REGIMES:
            dom = _domain(kind, n)
            prob = make_problem(p, n, dom)
            for fam in families:
                for i, (y, s) in enumerate(anchors(kind, n, fam)):
                    b = make_barrier(prob, fam, y, s, eps)
                    rep = sweep(b, prob, n_per_piece=n_per_piece, n_boundary=n_per_piece, seed=i)
                    label = f"{kind}/p={p:g}/n={n}/{fam}/{i}"
                    if not rep.passed:
                        failures.append({"barrier": label, "failed": rep.failures()})
                    for piece, st in rep.pieces.items():
                        if b.family != "constant":
                            min_samples = min(min_samples, st["count"])
                        if st["worst_normalized"] is None or piece == EXTERIOR:
                            continue
                        if b.kind == "sub":
                            worst_sub = min(worst_sub, st["worst_normalized"])
                        else:
                            worst_super = min(worst_super, st["worst_normalized"])
                    reports.append(label)
    ok = not failures and min_samples >= n_per_piece
    return ok, {"barriers": len(reports), "failures": failures, "min_samples_per_piece": min_samples,
                "worst_sub_margin_over_scale": worst_sub, "worst_super_margin_over_scale": worst_super,
                "_summary": ["barriers", "min_samples_per_piece", "worst_sub_margin_over_scale",
                             "worst_super_margin_over_scale"]}


def violation_probes(n_per_piece=10_000, eps=0.05):
    """Barriers with c below its lower bound or rho beyond its cap must fail verification."""
    probes = []
    for p, n in ((3.0, 2), (4.0, 2)):
        prob = make_problem(p, n, Ball(np.zeros(n), 1.0))
        y = _direction(0.3, n)
        good = make_side_sub_highp(prob, y, 1.0, eps)
        bad = make_side_sub_highp(prob, y, 1.0, eps, c=good.params.c_min / 2)
        probes.append((f"c_min/2 p={p:g} n={n}", prob, bad))
    for p, n in ((2.0, 2), (2.0, 3), (2.5, 3)):
        prob = make_problem(p, n, Ball(np.zeros(n), 1.0))
        y = _direction(0.3, n)
        good = make_side_sub_lowp(prob, y, 1.0, eps)
        bad = make_side_sub_lowp(prob, y, 1.0, eps, rho=2 * good.params.rho_cap)
        probes.append((f"2 rho_cap p={p:g} n={n}", prob, bad))
    outcome = {}
    for label, prob, bad in probes:
        rep = sweep(bad, prob, n_per_piece=n_per_piece, n_boundary=n_per_piece)
        mins = [st["min"] for st in rep.pieces.values() if st["min"] is not None]
        outcome[label] = {"report_pass": rep.passed, "failed_checks": rep.failures(),
                          "min_residual": min(mins)}
    ok = all(not v["report_pass"] for v in outcome.values())
    caught = sum(not v["report_pass"] for v in outcome.values())
    return ok, {"probes": outcome, "caught": f"{caught}/{len(outcome)}", "_summary": ["caught"]}


# -- 4 ----------------------------------------------------------------------------------------


def random_jets(rng, count, n):
    q = rng.normal(size=(count, n)) * rng.choice([0.1, 1.0, 3.0], size=(count, 1))
    A = rng.normal(size=(count, n, n))
    X = A + np.swapaxes(A, 1, 2)
    a = rng.normal(size=count) * 2
    return Jet(a, q, X)


def jet_identities(count=1000, seed=0):
    rng = np.random.default_rng(seed)
    worst_log, worst_scale = 0.0, 0.0
    for p in (2.0, 3.0, 4.0):
        for n in (2, 3):
            e = Exponents(p, n)
            jet = random_jets(rng, count, n)
            eta = rng.uniform(-2, 2, size=count)
            res, scale = log_equiv_check(eta, jet, e)
            worst_log = max(worst_log, float(np.max(res / scale)))
            alpha = np.exp(rng.uniform(np.log(0.25), np.log(4.0), size=count))
            res2, scale2 = scaling_check(jet, alpha, e)
            worst_scale = max(worst_scale, float(np.max(res2 / scale2)))
    ok = worst_log <= 1e-10 and worst_scale <= 1e-10
    return ok, {"fixtures_per_p": 2 * count, "max_rel_log_equivalence": worst_log,
                "max_rel_scaling": worst_scale,
                "_summary": ["fixtures_per_p", "max_rel_log_equivalence", "max_rel_scaling"]}


# -- 5, 6, 7 ----------------------------------------------------------------------------------

HEAT_BOX = Box(np.array([0.0, 0.0]), np.array([math.pi, 1.0]))
HEAT_CELLS = (16, 32, 64)
PLANE_BOX = Box(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
PLANE_CELLS = (16, 32, 64)
PLANE_A = 0.5 * np.array([math.cos(0.3), math.sin(0.3)])


def _orders(rows):
    return [r["order"] for r in rows if r["order"] is not None]


def heat_benchmark():
    study = convergence_study(heat_solution(), HEAT_BOX, 0.5, HEAT_CELLS)
    rows = study["rows"]
    errors, orders = [r["error"] for r in rows], _orders(rows)
    ok = (all(abs(o - 2) <= 0.3 for o in orders) and errors[-1] <= 1e-3
          and all(b < a for a, b in zip(errors, errors[1:])))
    return study, ok, {"h": [r["h"] for r in rows], "errors": errors, "orders": orders,
                       "_summary": ["errors", "orders"]}


def plane_wave_benchmark():
    study = convergence_study(plane_wave(PLANE_A, 3.0), PLANE_BOX, 0.25, PLANE_CELLS, layout="cell")
    rows = study["rows"]
    errors, orders = [r["error"] for r in rows], _orders(rows)
    ok = all(b < a for a, b in zip(errors, errors[1:])) and all(o >= 0.8 for o in orders)
    exact = plane_wave(PLANE_A, 3.0)
    vtx = solve(exact.problem(PLANE_BOX, 0.25), Grid.from_spacing(PLANE_BOX, 1 / PLANE_CELLS[0]),
                SolveConfig(n_snapshots=2))
    return study, ok, {"layout": "cell", "h": [r["h"] for r in rows], "errors": errors, "orders": orders,
                       "vertex_layout_error": max_error(vtx, exact),
                       "_summary": ["errors", "orders", "vertex_layout_error"]}


def max_principle_constants(study, order):
    """Overshoot constants C_i = excess_i / h_i^order; rounding-level excess counts as zero."""
    consts = []
    for row in study["rows"]:
        mp = row["max_principle"]
        excess = mp["excess"] if mp["excess"] > 1e-12 * max(1.0, mp["M"]) else 0.0
        consts.append(excess / row["h"] ** order)
    ok = all(np.isfinite(consts)) and all(b <= a * (1 + 1e-9) for a, b in zip(consts, consts[1:]))
    return ok, consts


# -- 8 ----------------------------------------------------------------------------------------


def comparison_properties(h=1 / 16, T=0.5):
    dom = Ball(np.zeros(2), 1.0)
    e = Exponents(3.0, 2)
    base = BoundaryDatum.from_space_time(smooth_datum)
    shifted = BoundaryDatum.from_space_time(lambda x, t: smooth_datum(x, t) + 0.5)
    grid = Grid.from_spacing(dom, h)
    cfg = SolveConfig(n_snapshots=10, G=1.0)
    solve_with = lambda d: solve(CylinderProblem(dom, T, e, d), grid, cfg)
    tu, tv, tc = solve_with(base), solve_with(shifted), solve_with(base.scaled(2.0))
    order = comparison_report(tu, tv)
    shift = shift_report(tu, tc, 2.0)
    quotient = comparison_report(tc, tu, tol=0.0)
    q_err = max(abs(quotient["quotient_interior"] - 2.0), abs(quotient["quotient_boundary"] - 2.0))
    ok = order["pass"] and shift["max_deviation"] <= 1e-12 and q_err <= 1e-12
    return ok, {"ordered": order["ordered"], "max_log_gap_u_minus_v": order["max_log_gap"],
                "shift_max_deviation": shift["max_deviation"], "quotient_error": q_err,
                "_summary": ["ordered", "max_log_gap_u_minus_v", "shift_max_deviation", "quotient_error"]}


# -- 9 ----------------------------------------------------------------------------------------

SANDWICH_ANCHORS = ((0.3, 0.25), (2.0, 0.5), (4.0, 0.75))


def barrier_sandwich(h=1 / 32, eps=0.05, T=1.0):
    dom = Ball(np.zeros(2), 1.0)
    prob = make_problem(3.0, 2, dom, T=T)
    grid = Grid.from_spacing(dom, h)
    anchors = [(_direction(a, 2), s) for a, s in SANDWICH_ANCHORS]
    traj = solve(prob, grid, SolveConfig(n_snapshots=20, snapshot_times=tuple(s for _, s in anchors)))
    wave = plane_wave(PLANE_A, 3.0)
    calib = solve(wave.problem(dom, 0.25), grid, SolveConfig(n_snapshots=2))
    tol = 2 * max_error(calib, wave, "eta")
    out, ok = {}, True
    for i, (y, s) in enumerate(anchors):
        sub = make_side_sub_highp(prob, y, s, eps)
        sup = make_side_super_highp(prob, y, s, eps)
        verified = sweep(sub, prob, seed=i).passed and sweep(sup, prob, seed=i).passed
        rep = barrier_sandwich_report(traj, sub, sup, (y, s), eps, tol, verified)
        out[f"anchor_{i}"] = rep
        ok = ok and rep["pass"]
    return ok, {"tol_disc": tol, "anchors": out,
                "max_anchor_gap": max(r["anchor_gap"] for r in out.values()),
                "max_sub_excess": max(r["max_sub_excess"] for r in out.values()),
                "max_super_excess": max(r["max_super_excess"] for r in out.values()),
                "_summary": ["tol_disc", "max_anchor_gap", "max_sub_excess", "max_super_excess"]}


# -- driver -----------------------------------------------------------------------------------


class AcceptanceRun:
    """Runs criteria lazily; the maximum-principle criterion reuses the benchmark studies."""

    def __init__(self):
        self._results = {}
        self._studies = {}

    def criterion(self, k: int) -> CriterionResult:
        if k not in self._results:
            self._results[k] = getattr(self, f"_c{k}")()
        return self._results[k]

    def all(self):
        return [self.criterion(k) for k in range(1, 10)]

    def _c1(self):
        return _timed(1, "algebraic identities", 5, algebraic_identities)

    def _c2(self):
        return _timed(2, "barrier certification matrix", 120, certification_matrix)

    def _c3(self):
        return _timed(3, "violation probes", None, violation_probes)

    def _c4(self):
        return _timed(4, "log-equivalence and scaling identities", 10, jet_identities)

    def _c5(self):
        def run():
            study, ok, m = heat_benchmark()
            self._studies["heat"] = study
            return ok, m
        return _timed(5, "p=2 heat benchmark", 60, run)

    def _c6(self):
        def run():
            study, ok, m = plane_wave_benchmark()
            self._studies["plane"] = study
            return ok, m
        return _timed(6, "p=3 plane-wave benchmark", 120, run)

    def _c7(self):
        self.criterion(5)
        self.criterion(6)

        def run():
            heat_ok, heat_c = max_principle_constants(self._studies["heat"], 2.0)
            plane_ok, plane_c = max_principle_constants(self._studies["plane"], 1.0)
            excess = [r["max_principle"]["excess"] for s in ("heat", "plane") for r in self._studies[s]["rows"]]
            return heat_ok and plane_ok, {"C_heat": heat_c, "C_plane_wave": plane_c, "raw_excess": excess,
                                          "_summary": ["C_heat", "C_plane_wave"]}
        return _timed(7, "maximum principle on the benchmarks", None, run)

    def _c8(self):
        return _timed(8, "comparison and quotient bound", None, comparison_properties)

    def _c9(self):
        return _timed(9, "barrier sandwich", None, barrier_sandwich)


def run_all():
    return AcceptanceRun().all()

"""Explicit finite differences for the log-form equation on masked grids.

The unknown is eta = log u, advanced by

    eta_t = [L_p(q_h, X_h) + (p-1)|q_h|^p] / (p-1)

with central differences. Grid nodes are classified as interior (strictly
inside the domain), boundary (outside or on the boundary but next to an
interior node, valued by the datum at the nearest boundary point) and
exterior (ignored).
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.ndimage import binary_dilation

from .barriers import EXTERIOR as OUTSIDE_REGION
from .calculus import Exponents, lp_from_invariants
from .errors import (DivergenceError, DomainError, InvalidInputError, PositivityError,
                     StepRejectedError)
from .problem import Ball, Box, BoundaryDatum, CylinderProblem, SpatialDomain

EXTERIOR, BOUNDARY, INTERIOR = 0, 1, 2


class Grid:
    """Rectangular lattice over the domain's bounding box with one padding layer.

    ``layout='vertex'`` puts nodes on the box faces, ``layout='cell'`` at cell
    centers. Per-axis cell counts are ``max(min_cells, round(L_k / h))``.
    """

    def __init__(self, domain: SpatialDomain, cells: Sequence[int], layout: str = "vertex"):
        if layout not in ("vertex", "cell"):
            raise InvalidInputError(f"unknown grid layout {layout!r}")
        lo, hi = (np.asarray(v, dtype=float) for v in domain.bounding_box())
        cells = np.asarray(cells, dtype=int)
        if cells.shape != (domain.n,) or np.any(cells < 2):
            raise InvalidInputError("need at least two cells per axis")
        self.domain = domain
        self.layout = layout
        self.cells = cells
        self.spacing = (hi - lo) / cells
        axes = []
        for k in range(domain.n):
            if layout == "vertex":
                idx = np.arange(-1, cells[k] + 2)
                axes.append(lo[k] + idx * self.spacing[k])
            else:
                idx = np.arange(-1, cells[k] + 1)
                axes.append(lo[k] + (idx + 0.5) * self.spacing[k])
        self.axes = axes
        self.shape = tuple(len(a) for a in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        self.coords = np.stack([m.ravel() for m in mesh], axis=1)
        inside = domain.contains(self.coords, strict=True).reshape(self.shape)
        near = binary_dilation(inside, structure=np.ones((3,) * domain.n, dtype=bool))
        mask = np.full(self.shape, EXTERIOR, dtype=np.int8)
        mask[near & ~inside] = BOUNDARY
        mask[inside] = INTERIOR
        self.mask = mask.ravel()
        self.interior = np.flatnonzero(self.mask == INTERIOR)
        self.boundary = np.flatnonzero(self.mask == BOUNDARY)
        self.active = np.flatnonzero(self.mask != EXTERIOR)
        self.strides = np.array([int(np.prod(self.shape[k + 1:])) for k in range(domain.n)])
        self.projection = domain.project(self.coords[self.boundary]) if len(self.boundary) else \
            np.empty((0, domain.n))
        self.projection_distance = np.linalg.norm(self.coords[self.boundary] - self.projection, axis=1)
        self._check()

    def _check(self):
        if len(self.interior) == 0:
            raise InvalidInputError("grid has no interior nodes")
        for s in self.strides:
            for nb in (self.interior + s, self.interior - s):
                if np.any(self.mask[nb] == EXTERIOR):
                    raise InvalidInputError("interior node with an exterior axis neighbour")

    @classmethod
    def from_spacing(cls, domain: SpatialDomain, h: float, layout: str = "vertex", min_cells: int = 9):
        lo, hi = (np.asarray(v, dtype=float) for v in domain.bounding_box())
        cells = [max(min_cells, int(round((hi[k] - lo[k]) / h))) for k in range(domain.n)]
        return cls(domain, cells, layout)

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def h(self) -> float:
        """Largest spacing (the resolution reported in convergence tables)."""
        return float(self.spacing.max())

    @property
    def h_min(self) -> float:
        return float(self.spacing.min())

    def index_of(self, node) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in node), self.shape))

    def nearest_interior(self, x) -> int:
        d = np.linalg.norm(self.coords[self.interior] - np.asarray(x, dtype=float), axis=1)
        return int(self.interior[np.argmin(d)])

    def same_as(self, other: "Grid") -> bool:
        return (self.shape == other.shape and self.layout == other.layout
                and np.array_equal(self.coords, other.coords) and np.array_equal(self.mask, other.mask))

    def to_dict(self):
        return {"layout": self.layout, "cells": self.cells.tolist(), "spacing": self.spacing.tolist(),
                "interior_nodes": int(len(self.interior)), "boundary_nodes": int(len(self.boundary)),
                "max_projection_distance": float(self.projection_distance.max(initial=0.0)),
                "domain": self.domain.to_dict()}


@dataclass(frozen=True, eq=False)
class GridField:
    """eta values on every grid node (NaN at exterior nodes) at time ``t``."""

    grid: Grid
    eta: np.ndarray
    t: float

    @property
    def u(self):
        return np.exp(self.eta)

    def interior_values(self):
        return self.eta[self.grid.interior]

    def active_values(self):
        return self.eta[self.grid.active]


@dataclass(frozen=True)
class SolveConfig:
    safety: float = 0.4
    G: Optional[float] = None
    end_time: Optional[float] = None
    n_snapshots: int = 10
    snapshot_times: tuple = ()
    max_steps: int = 5_000_000

    def __post_init__(self):
        if not 0 < self.safety <= 1:
            raise InvalidInputError(f"safety factor must lie in (0, 1], got {self.safety}")
        if self.G is not None and not self.G > 0:
            raise InvalidInputError(f"gradient cap G must be positive, got {self.G}")
        if self.end_time is not None and not self.end_time > 0:
            raise InvalidInputError("end time must be positive")
        if self.n_snapshots < 1:
            raise InvalidInputError("need at least one snapshot")


@dataclass
class Trajectory:
    problem: CylinderProblem
    grid: Grid
    snapshots: list
    stats: dict = field(default_factory=dict)

    @property
    def final(self) -> GridField:
        return self.snapshots[-1]

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    def at_time(self, t) -> GridField:
        i = int(np.argmin(np.abs(self.times - t)))
        return self.snapshots[i]


# -- stencils -------------------------------------------------------------------------------


def _derivatives(field: GridField, nodes):
    g = field.grid
    eta = field.eta
    c = eta[nodes]
    n = g.n
    q = np.empty((len(nodes), n))
    diag = np.empty((len(nodes), n))
    for k in range(n):
        s, hk = g.strides[k], g.spacing[k]
        ep, em = eta[nodes + s], eta[nodes - s]
        q[:, k] = (ep - em) / (2 * hk)
        diag[:, k] = (ep - 2 * c + em) / hk**2
    cross = {}
    for k, l in itertools.combinations(range(n), 2):
        sk, sl = g.strides[k], g.strides[l]
        cross[k, l] = (eta[nodes + sk + sl] - eta[nodes + sk - sl] - eta[nodes - sk + sl]
                       + eta[nodes - sk - sl]) / (4 * g.spacing[k] * g.spacing[l])
    return q, diag, cross


def _spatial_operator(field: GridField, nodes, p):
    q, diag, cross = _derivatives(field, nodes)
    qn2 = np.einsum("ij,ij->i", q, q)
    tr = diag.sum(axis=1)
    qXq = np.einsum("ij,ij->i", q * q, diag)
    for (k, l), v in cross.items():
        qXq += 2 * q[:, k] * q[:, l] * v
    return lp_from_invariants(qn2, tr, qXq, p) + (p - 1) * qn2 ** (p / 2)


def discrete_kp_all(field: GridField, e: Exponents):
    """L_p(q_h, X_h) + (p-1)|q_h|^p at every interior node (in ``grid.interior`` order)."""
    return _spatial_operator(field, field.grid.interior, e.p)


def discrete_kp(field: GridField, node, e: Exponents) -> float:
    """Spatial part of the discrete operator at one node (multi-index or flat index)."""
    g = field.grid
    idx = g.index_of(node) if np.ndim(node) else int(node)
    if g.mask[idx] != INTERIOR:
        raise DomainError("discrete operator needs an interior node")
    return float(_spatial_operator(field, np.array([idx]), e.p)[0])


def max_gradient(field: GridField) -> float:
    q, _, _ = _derivatives(field, field.grid.interior)
    return float(np.sqrt(np.einsum("ij,ij->i", q, q)).max())


def cfl_dt(field_or_grid, cfg: SolveConfig, e: Exponents, G: Optional[float] = None) -> float:
    """safety * min(h^2 / (2n max(G,1)^(p-2)), h / (p max(G,1)^(p-1))) with h the smallest spacing."""
    grid = field_or_grid.grid if isinstance(field_or_grid, GridField) else field_or_grid
    G = cfg.G if G is None else G
    if G is None or not G > 0:
        raise InvalidInputError("gradient cap G must be positive")
    g = max(G, 1.0)
    h = grid.h_min
    p = e.p
    return cfg.safety * min(h**2 / (2 * grid.n * g ** (p - 2)), h / (p * g ** (p - 1)))


def boundary_eta(prob: CylinderProblem, grid: Grid, t: float):
    vals = prob.h(grid.projection, np.full(len(grid.projection), float(t)))
    if np.any(~(vals > 0)):
        raise PositivityError(f"datum is not positive on the boundary at t={t}")
    return np.log(vals)


def initial_field(prob: CylinderProblem, grid: Grid) -> GridField:
    eta = np.full(len(grid.coords), np.nan)
    f = prob.h(grid.coords[grid.interior], np.zeros(len(grid.interior)))
    if np.any(~(f > 0)):
        raise PositivityError("initial datum is not positive")
    eta[grid.interior] = np.log(f)
    eta[grid.boundary] = boundary_eta(prob, grid, 0.0)
    return GridField(grid, eta, 0.0)


def step(field: GridField, dt: float, prob: CylinderProblem, cfg: SolveConfig,
         G: Optional[float] = None) -> GridField:
    """One forward-Euler step; boundary nodes take the datum at t + dt."""
    limit = cfl_dt(field, cfg, prob.e, G)
    if dt > limit * (1 + 1e-12):
        raise StepRejectedError(f"dt={dt} exceeds the stability bound {limit}")
    g = field.grid
    p = prob.e.p
    eta = field.eta.copy()
    eta[g.interior] = field.eta[g.interior] + dt * discrete_kp_all(field, prob.e) / (p - 1)
    eta[g.boundary] = boundary_eta(prob, g, field.t + dt)
    return GridField(g, eta, field.t + dt)


def _snapshot_times(cfg: SolveConfig, end):
    times = set(np.linspace(0.0, end, cfg.n_snapshots + 1)[1:].tolist())
    times.update(float(t) for t in cfg.snapshot_times if 0 < t <= end)
    times.add(float(end))
    return sorted(times)


def solve(prob: CylinderProblem, grid: Grid, cfg: SolveConfig = SolveConfig()) -> Trajectory:
    """March from eta(., 0) = log f to the end time, keeping the requested snapshots."""
    if grid.domain is not prob.domain and grid.domain.to_dict() != prob.domain.to_dict():
        raise InvalidInputError("grid was built for a different domain")
    end = prob.T if cfg.end_time is None else cfg.end_time
    if end > prob.T * (1 + 1e-12):
        raise InvalidInputError("end time exceeds the horizon T")
    field = initial_field(prob, grid)
    G = max(cfg.G or 0.0, 1.1 * max_gradient(field), 1e-12)
    snaps, targets = [field], _snapshot_times(cfg, end)
    steps, dt_min, dt_max = 0, math.inf, 0.0
    for target in targets:
        while field.t < target:
            if steps >= cfg.max_steps:
                raise DivergenceError("step budget exhausted", steps)
            dt = cfl_dt(field, cfg, prob.e, G)
            remaining = target - field.t
            if dt >= remaining * (1 - 1e-12):
                dt = remaining
            elif dt > remaining / 2:
                # two even steps instead of a full one followed by a sliver
                dt = remaining / 2
            field = step(field, dt, prob, cfg, G)
            if dt == remaining:
                field = GridField(grid, field.eta, target)
            steps += 1
            dt_min, dt_max = min(dt_min, dt), max(dt_max, dt)
            vals = field.eta[grid.active]
            if not np.all(np.isfinite(vals)):
                raise DivergenceError(f"non-finite values after step {steps}", steps)
            G = max(G, 1.1 * max_gradient(field))
        snaps.append(field)
    return Trajectory(prob, grid, snaps, {"steps": steps, "dt_min": dt_min, "dt_max": dt_max,
                                          "G_final": G})


# -- property reports -----------------------------------------------------------------------


def max_principle_report(traj: Trajectory, bounds=None) -> dict:
    """Interior overshoot of every snapshot above sup h and below inf h on the parabolic boundary."""
    m, M = bounds if bounds is not None else (traj.problem.m, traj.problem.M)
    over, under = 0.0, 0.0
    for snap in traj.snapshots:
        u = np.exp(snap.interior_values())
        over = max(over, float(u.max() - M))
        under = max(under, float(m - u.min()))
    return {"sup_excess": over, "inf_excess": under, "excess": max(over, under, 0.0),
            "m": m, "M": M, "h": traj.grid.h}


def _require_matching(a: Trajectory, b: Trajectory):
    if not a.grid.same_as(b.grid):
        raise InvalidInputError("trajectories live on different grids")
    if len(a.snapshots) != len(b.snapshots) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise InvalidInputError("trajectories have different snapshot times")


def comparison_report(traj_u: Trajectory, traj_v: Trajectory, tol: float = 0.0) -> dict:
    """Pointwise ordering u <= v and the quotient bound sup u/v <= sup over boundary of u/v."""
    _require_matching(traj_u, traj_v)
    g = traj_u.grid
    worst_order = -math.inf
    q_in, q_bd = -math.inf, -math.inf
    for k, (a, b) in enumerate(zip(traj_u.snapshots, traj_v.snapshots)):
        diff = a.eta[g.active] - b.eta[g.active]
        worst_order = max(worst_order, float(diff.max()))
        ratio = np.exp(a.eta - b.eta)
        q_in = max(q_in, float(ratio[g.interior].max()))
        q_bd = max(q_bd, float(ratio[g.boundary].max()))
        if k == 0:
            q_bd = max(q_bd, float(ratio[g.interior].max()))
    ordered = worst_order <= tol
    quotient = q_in <= q_bd * (1 + 1e-12) + tol
    return {"ordered": bool(ordered), "max_log_gap": worst_order, "quotient_interior": q_in,
            "quotient_boundary": q_bd, "quotient_bound": bool(quotient),
            "pass": bool(ordered and quotient)}


def shift_report(traj: Trajectory, traj_scaled: Trajectory, c: float) -> dict:
    """Largest deviation of eta_scaled - eta from log c over all snapshots and active nodes."""
    _require_matching(traj, traj_scaled)
    g = traj.grid
    dev = 0.0
    for a, b in zip(traj.snapshots, traj_scaled.snapshots):
        dev = max(dev, float(np.max(np.abs(b.eta[g.active] - a.eta[g.active] - math.log(c)))))
    return {"c": c, "max_deviation": dev}


def barrier_sandwich_report(traj: Trajectory, sub, sup, anchor, eps: float, tol: float,
                            verified: bool = True) -> dict:
    """sub <= eta_num <= super at every active node of every snapshot, up to ``tol`` in eta.

    Barriers are compared in log form. At the anchor (y, s) the numerical
    solution at the interior node nearest to y must lie within 2 eps + tol
    of h(y, s) in u.
    """
    if not verified:
        raise InvalidInputError("barriers must pass verification before a sandwich check")
    g = traj.grid
    x = g.coords[g.active]
    worst_lo, worst_hi = -math.inf, -math.inf
    in_region = 0
    for snap in traj.snapshots:
        t = np.full(len(x), snap.t)
        eta = snap.eta[g.active]
        lo, hi = sub.eta_value(x, t), sup.eta_value(x, t)
        worst_lo = max(worst_lo, float(np.max(lo - eta)))
        worst_hi = max(worst_hi, float(np.max(eta - hi)))
        in_region += int(np.sum(sub.piece(x, t) != OUTSIDE_REGION) + np.sum(sup.piece(x, t) != OUTSIDE_REGION))
    y, s = anchor
    snap = traj.at_time(s)
    node = g.nearest_interior(y)
    u_num = float(np.exp(snap.eta[node]))
    h_ys = float(traj.problem.h(np.asarray(y, dtype=float)[None], np.array([s]))[0])
    tol_u = tol * max(u_num, h_ys)
    anchor_ok = h_ys - 2 * eps - tol_u <= u_num <= h_ys + 2 * eps + tol_u
    ok = worst_lo <= tol and worst_hi <= tol and anchor_ok
    return {"pass": bool(ok), "max_sub_excess": worst_lo, "max_super_excess": worst_hi,
            "region_node_samples": in_region, "anchor_u": u_num, "anchor_h": h_ys,
            "anchor_gap": abs(u_num - h_ys), "anchor_time_error": abs(snap.t - s), "tol": tol}


# -- exact solutions and convergence --------------------------------------------------------


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form positive solution with its boundary datum on a given domain."""

    name: str
    p: float
    u: Callable
    bounds: Callable

    def eta(self, x, t):
        return np.log(self.u(x, t))

    def problem(self, domain: SpatialDomain, T: float, **kw) -> CylinderProblem:
        datum = BoundaryDatum.from_space_time(self.u, self.bounds(domain, T))
        return CylinderProblem(domain, T, Exponents(self.p, domain.n), datum, **kw)


def heat_solution() -> ExactSolution:
    """u = 2 + sin(x1) e^-t, which solves the p = 2 equation u_t = Delta u."""
    def u(x, t):
        return 2.0 + np.sin(x[:, 0]) * np.exp(-np.asarray(t, dtype=float))

    def bounds(domain, T):
        if not (isinstance(domain, Box) and domain.lo[0] == 0 and domain.hi[0] == math.pi):
            raise InvalidInputError("heat benchmark bounds assume the box (0, pi) x ...")
        return (2.0, 3.0)
    return ExactSolution("heat", 2.0, u, bounds)


def plane_wave(a, p: float) -> ExactSolution:
    """u = exp(a.x + |a|^p t); its logarithm is affine in x and t."""
    a = np.asarray(a, dtype=float)
    speed = float(np.linalg.norm(a)) ** p

    def u(x, t):
        return np.exp(x @ a + speed * np.asarray(t, dtype=float))

    def bounds(domain, T):
        if isinstance(domain, Box):
            lo = float(np.sum(np.minimum(a * domain.lo, a * domain.hi)))
            hi = float(np.sum(np.maximum(a * domain.lo, a * domain.hi)))
        elif isinstance(domain, Ball):
            c, r = float(a @ domain.center), float(np.linalg.norm(a)) * domain.radius
            lo, hi = c - r, c + r
        else:
            raise InvalidInputError("plane-wave bounds need a box or ball domain")
        return (math.exp(lo), math.exp(hi + speed * T))
    return ExactSolution("plane_wave", p, u, bounds)


def constant_solution(c: float, p: float) -> ExactSolution:
    return ExactSolution("constant", p, lambda x, t: np.full(len(x), float(c)),
                         lambda domain, T: (float(c), float(c)))


def max_error(traj: Trajectory, exact: ExactSolution, variable: str = "u") -> float:
    snap = traj.final
    g = traj.grid
    x = g.coords[g.interior]
    t = np.full(len(x), snap.t)
    if variable == "u":
        return float(np.max(np.abs(np.exp(snap.interior_values()) - exact.u(x, t))))
    return float(np.max(np.abs(snap.interior_values() - exact.eta(x, t))))


def convergence_study(exact: ExactSolution, domain: SpatialDomain, T: float, cells: Sequence[int],
                      layout: str = "vertex", cfg: SolveConfig = SolveConfig(n_snapshots=4),
                      min_cells: int = 9) -> dict:
    """Solve on each grid of the ladder (spacing from the first axis) and tabulate errors and orders."""
    prob = exact.problem(domain, T)
    lo, hi = (np.asarray(v, dtype=float) for v in domain.bounding_box())
    rows, trajs = [], []
    for N in cells:
        h = (hi[0] - lo[0]) / N
        grid = Grid.from_spacing(domain, h, layout, min_cells)
        traj = solve(prob, grid, cfg)
        err = max_error(traj, exact)
        order = None
        if rows and err > 0 and rows[-1]["error"] > 0:
            order = math.log(rows[-1]["error"] / err) / math.log(rows[-1]["h"] / grid.h)
        rows.append({"h": grid.h, "error": err, "order": order, "steps": traj.stats["steps"],
                     "max_principle": max_principle_report(traj)})
        trajs.append(traj)
    return {"solution": exact.name, "p": exact.p, "layout": layout, "rows": rows, "trajectories": trajs}


# -- export ---------------------------------------------------------------------------------


def write_snapshots_csv(traj: Trajectory, path) -> None:
    g = traj.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{k + 1}" for k in range(g.n)] + ["eta", "u"])
        for snap in traj.snapshots:
            for idx in g.active:
                eta = float(snap.eta[idx])
                w.writerow([repr(float(snap.t))] + [repr(float(v)) for v in g.coords[idx]]
                           + [repr(eta), repr(math.exp(eta))])


def write_orders_csv(study: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "error", "order"])
        for row in study["rows"]:
            w.writerow([repr(row["h"]), repr(row["error"]), "" if row["order"] is None else repr(row["order"])])


def run_manifest(traj: Trajectory, cfg: SolveConfig) -> dict:
    final = traj.final.interior_values()
    return {"grid": traj.grid.to_dict(), "config": {"safety": cfg.safety, "G": cfg.G,
                                                    "end_time": cfg.end_time,
                                                    "n_snapshots": cfg.n_snapshots},
            "stats": {k: float(v) for k, v in traj.stats.items()},
            "final": {"t": traj.final.t, "eta_min": float(final.min()), "eta_max": float(final.max())},
            "max_principle": max_principle_report(traj)}


def write_manifest(traj: Trajectory, cfg: SolveConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(run_manifest(traj, cfg), fh, indent=2, sort_keys=True)

"""Cylinder problems: spatial domains, boundary data and geometric queries."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .calculus import Exponents
from .errors import DomainError, InvalidInputError, PositivityError, UnsupportedDomainError

BOUNDARY_TOL = 1e-9


def _as_points(x, n):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != n:
        raise InvalidInputError(f"expected points of dimension {n}, got shape {x.shape}")
    return x


def _unit_directions(rng, count, n):
    v = rng.standard_normal((count, n))
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    return v / norm


def _ball_points(rng, count, center, radius):
    n = len(center)
    d = _unit_directions(rng, count, n)
    rad = radius * rng.random(count) ** (1.0 / n)
    return center + d * rad[:, None]


class SpatialDomain:
    """Bounded open set with analytic boundary queries.

    Subclasses provide a signed distance (negative inside), the nearest
    boundary point and the outward normal.
    """

    kind = "abstract"
    outer_ball_radius: Optional[float] = None

    @property
    def n(self) -> int:
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def signed_distance(self, x):
        raise NotImplementedError

    def project(self, x):
        raise NotImplementedError

    def normal(self, y):
        raise NotImplementedError

    def sample_boundary(self, count, rng):
        raise NotImplementedError

    def contains(self, x, strict=False, tol=BOUNDARY_TOL):
        """Membership in the closure (default) or in the open set (``strict``)."""
        d = self.signed_distance(x)
        return d < -tol if strict else d <= tol

    def on_boundary(self, x, tol=BOUNDARY_TOL):
        return np.abs(self.signed_distance(x)) <= tol

    def distance_to_boundary(self, x):
        return np.abs(self.signed_distance(x))

    def sample_closure(self, count, rng):
        lo, hi = self.bounding_box()
        out = np.empty((0, self.n))
        while len(out) < count:
            cand = lo + (hi - lo) * rng.random((2 * count + 16, self.n))
            out = np.vstack([out, cand[self.contains(cand)]])
        return out[:count]

    def boundary_patch(self, y, radius, count, rng):
        """Boundary points within ``radius`` of ``y`` (projected ball samples)."""
        y = np.asarray(y, dtype=float)
        cand = _ball_points(rng, count, y, radius)
        proj = self.project(cand)
        keep = np.linalg.norm(proj - y, axis=1) <= radius
        return proj[keep]

    def corner_points(self):
        return np.empty((0, self.n))

    def outer_ball(self, y, rho):
        """Center z of an exterior ball of radius ``rho`` touching the boundary at ``y``."""
        if self.outer_ball_radius is None:
            raise UnsupportedDomainError(f"domain kind {self.kind!r} has no uniform outer ball radius")
        if not rho > 0:
            raise InvalidInputError("outer ball radius must be positive")
        if rho > self.outer_ball_radius * (1 + 1e-12):
            raise InvalidInputError(f"rho={rho} exceeds the outer ball radius {self.outer_ball_radius}")
        y = np.asarray(y, dtype=float)
        if not self.on_boundary(y[None])[0]:
            raise DomainError("outer_ball needs a boundary point")
        return y + rho * self.normal(y)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Box(SpatialDomain):
    lo: np.ndarray
    hi: np.ndarray
    outer_ball_radius: Optional[float] = math.inf

    kind = "box"

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi <= lo):
            raise InvalidInputError("box needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self):
        return len(self.lo)

    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    def signed_distance(self, x):
        x = _as_points(x, self.n)
        c = 0.5 * (self.lo + self.hi)
        half = 0.5 * (self.hi - self.lo)
        q = np.abs(x - c) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def project(self, x):
        x = _as_points(x, self.n)
        out = np.clip(x, self.lo, self.hi)
        inside = np.all((x > self.lo) & (x < self.hi), axis=1)
        if np.any(inside):
            xi = x[inside]
            gaps = np.concatenate([xi - self.lo, self.hi - xi], axis=1)
            k = gaps.argmin(axis=1)
            rows = np.arange(len(xi))
            axis = k % self.n
            target = np.where(k < self.n, self.lo[axis], self.hi[axis])
            xi = xi.copy()
            xi[rows, axis] = target
            out[inside] = xi
        return out

    def normal(self, y):
        y = np.asarray(y, dtype=float)
        scale = max(1.0, float(np.max(self.hi - self.lo)))
        nrm = np.where(np.abs(y - self.lo) <= BOUNDARY_TOL * scale, -1.0, 0.0)
        nrm = nrm + np.where(np.abs(y - self.hi) <= BOUNDARY_TOL * scale, 1.0, 0.0)
        length = np.linalg.norm(nrm)
        if length == 0:
            raise DomainError("normal requested at a non-boundary point")
        return nrm / length

    def sample_boundary(self, count, rng):
        widths = self.hi - self.lo
        areas = np.array([np.prod(np.delete(widths, i)) for i in range(self.n)])
        probs = np.concatenate([areas, areas]) / (2 * areas.sum())
        face = rng.choice(2 * self.n, size=count, p=probs)
        pts = self.lo + widths * rng.random((count, self.n))
        axis = face % self.n
        rows = np.arange(count)
        pts[rows, axis] = np.where(face < self.n, self.lo[axis], self.hi[axis])
        return pts

    def corner_points(self):
        grids = np.meshgrid(*[[a, b] for a, b in zip(self.lo, self.hi)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def to_dict(self):
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist(),
                "outer_ball_radius": _radius_out(self.outer_ball_radius)}


@dataclass(frozen=True, eq=False)
class Ball(SpatialDomain):
    center: np.ndarray
    radius: float
    outer_ball_radius: Optional[float] = math.inf

    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise InvalidInputError("ball radius must be positive")

    @property
    def n(self):
        return len(self.center)

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    @property
    def diameter(self):
        return 2.0 * self.radius

    def signed_distance(self, x):
        x = _as_points(x, self.n)
        return np.linalg.norm(x - self.center, axis=1) - self.radius

    def project(self, x):
        x = _as_points(x, self.n)
        d = x - self.center
        r = np.linalg.norm(d, axis=1, keepdims=True)
        u = np.where(r > 0, d / np.where(r > 0, r, 1.0), np.eye(self.n)[0])
        return self.center + self.radius * u

    def normal(self, y):
        d = np.asarray(y, dtype=float) - self.center
        return d / np.linalg.norm(d)

    def sample_boundary(self, count, rng):
        return self.center + self.radius * _unit_directions(rng, count, self.n)

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius,
                "outer_ball_radius": _radius_out(self.outer_ball_radius)}


@dataclass(frozen=True, eq=False)
class Annulus(SpatialDomain):
    """Shell r_in < |x - center| < r_out; the hole supplies outer balls up to r_in."""

    center: np.ndarray
    r_in: float
    r_out: float
    outer_ball_radius: Optional[float] = None

    kind = "annulus"

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not 0 < self.r_in < self.r_out:
            raise InvalidInputError("annulus needs 0 < r_in < r_out")
        if self.outer_ball_radius is None:
            object.__setattr__(self, "outer_ball_radius", float(self.r_in))
        elif self.outer_ball_radius > self.r_in:
            raise InvalidInputError("annulus outer ball radius cannot exceed r_in")

    @property
    def n(self):
        return len(self.center)

    def bounding_box(self):
        return self.center - self.r_out, self.center + self.r_out

    @property
    def diameter(self):
        return 2.0 * self.r_out

    def signed_distance(self, x):
        x = _as_points(x, self.n)
        r = np.linalg.norm(x - self.center, axis=1)
        return np.maximum(r - self.r_out, self.r_in - r)

    def project(self, x):
        x = _as_points(x, self.n)
        d = x - self.center
        r = np.linalg.norm(d, axis=1, keepdims=True)
        u = np.where(r > 0, d / np.where(r > 0, r, 1.0), np.eye(self.n)[0])
        target = np.where(r <= 0.5 * (self.r_in + self.r_out), self.r_in, self.r_out)
        return self.center + target * u

    def normal(self, y):
        d = np.asarray(y, dtype=float) - self.center
        r = np.linalg.norm(d)
        u = d / r
        return -u if abs(r - self.r_in) < abs(r - self.r_out) else u

    def sample_boundary(self, count, rng):
        w_in = self.r_in ** (self.n - 1)
        w_out = self.r_out ** (self.n - 1)
        inner = rng.random(count) < w_in / (w_in + w_out)
        rad = np.where(inner, self.r_in, self.r_out)
        return self.center + rad[:, None] * _unit_directions(rng, count, self.n)

    def to_dict(self):
        return {"kind": "annulus", "center": self.center.tolist(), "r_in": self.r_in,
                "r_out": self.r_out, "outer_ball_radius": _radius_out(self.outer_ball_radius)}


@dataclass(frozen=True, eq=False)
class BallUnionBox(SpatialDomain):
    """Union of a ball and a box. No outer-ball support (not convex in general).

    The interior distance is the larger of the two component distances, which
    never exceeds the true distance to the boundary of the union.
    """

    ball: Ball
    box: Box

    kind = "ball-union-box"
    outer_ball_radius = None

    def __post_init__(self):
        if self.ball.n != self.box.n:
            raise InvalidInputError("ball and box dimensions differ")

    @property
    def n(self):
        return self.ball.n

    def bounding_box(self):
        a_lo, a_hi = self.ball.bounding_box()
        b_lo, b_hi = self.box.bounding_box()
        return np.minimum(a_lo, b_lo), np.maximum(a_hi, b_hi)

    def signed_distance(self, x):
        return np.minimum(self.ball.signed_distance(x), self.box.signed_distance(x))

    def _valid_on_union(self, y):
        return ~(self.ball.contains(y, strict=True) | self.box.contains(y, strict=True))

    def project(self, x):
        x = _as_points(x, self.n)
        cands = [self.ball.project(x), self.box.project(x)]
        best = np.full(len(x), np.inf)
        out = np.zeros_like(x)
        for c in cands:
            ok = self._valid_on_union(c)
            d = np.where(ok, np.linalg.norm(c - x, axis=1), np.inf)
            better = d < best
            out[better] = c[better]
            best = np.minimum(best, d)
        missing = ~np.isfinite(best)
        if np.any(missing):
            rng = np.random.default_rng(0)
            dense = self.sample_boundary(20000, rng)
            tree = cKDTree(dense)
            _, idx = tree.query(x[missing])
            out[missing] = dense[idx]
        return out

    def normal(self, y):
        y = np.asarray(y, dtype=float)
        if self.ball.on_boundary(y[None])[0]:
            return self.ball.normal(y)
        return self.box.normal(y)

    def sample_boundary(self, count, rng):
        out = np.empty((0, self.n))
        while len(out) < count:
            a = self.ball.sample_boundary(count, rng)
            b = self.box.sample_boundary(count, rng)
            both = np.vstack([a, b])
            out = np.vstack([out, both[self._valid_on_union(both)]])
        return out[rng.permutation(len(out))[:count]]

    def corner_points(self):
        c = self.box.corner_points()
        return c[self._valid_on_union(c)]

    def to_dict(self):
        return {"kind": "ball-union-box", "ball": self.ball.to_dict(), "box": self.box.to_dict()}


def _radius_out(r):
    return None if r is None or not math.isfinite(r) else float(r)


def domain_from_dict(d: dict) -> SpatialDomain:
    kind = d.get("kind")
    rho0 = d.get("outer_ball_radius")
    if kind == "box":
        return Box(d["lo"], d["hi"], math.inf if rho0 is None else float(rho0))
    if kind == "ball":
        return Ball(d["center"], float(d["radius"]), math.inf if rho0 is None else float(rho0))
    if kind == "annulus":
        return Annulus(d["center"], float(d["r_in"]), float(d["r_out"]), rho0)
    if kind == "ball-union-box":
        return BallUnionBox(domain_from_dict({**d["ball"], "kind": "ball"}),
                            domain_from_dict({**d["box"], "kind": "box"}))
    raise InvalidInputError(f"unknown domain kind {kind!r}")


def outer_ball(domain: SpatialDomain, y, rho):
    return domain.outer_ball(y, rho)


@dataclass(frozen=True)
class SpaceTimePoint:
    x: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "t", float(self.t))


@dataclass(frozen=True)
class BoundaryDatum:
    """Initial values ``f(x)`` and side values ``g(x, t)``, both vectorized.

    ``f`` takes an ``(N, n)`` array; ``g`` takes ``(N, n)`` and ``(N,)``.
    ``bounds`` optionally fixes the exact (inf, sup) over the parabolic boundary.
    """

    f: Callable
    g: Callable
    bounds: Optional[tuple] = None

    @classmethod
    def from_space_time(cls, h: Callable, bounds=None) -> "BoundaryDatum":
        """One space-time function used for both the initial and side values."""
        return cls(lambda x: h(x, np.zeros(len(x))), h, bounds)

    @classmethod
    def constant(cls, value: float) -> "BoundaryDatum":
        return cls(lambda x: np.full(len(x), float(value)),
                   lambda x, t: np.full(len(x), float(value)),
                   (float(value), float(value)))

    def scaled(self, c: float) -> "BoundaryDatum":
        b = None if self.bounds is None else (c * self.bounds[0], c * self.bounds[1])
        return BoundaryDatum(lambda x: c * self.f(x), lambda x, t: c * self.g(x, t), b)


@dataclass(frozen=True)
class Extrema:
    m: float
    M: float
    slack: float


@dataclass(frozen=True, eq=False)
class CylinderProblem:
    domain: SpatialDomain
    T: float
    e: Exponents
    datum: BoundaryDatum
    n_samples: int = 100_000
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidInputError(f"horizon T must be positive, got {self.T}")
        if self.domain.n != self.e.n:
            raise InvalidInputError("domain dimension does not match n")

    def h(self, x, t):
        """Datum at points assumed to lie on the parabolic boundary (vectorized, unchecked)."""
        x = _as_points(x, self.e.n)
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(x),))
        out = np.asarray(self.datum.g(x, t), dtype=float).copy()
        initial = (t == 0) & self.domain.contains(x, strict=True)
        if np.any(initial):
            out[initial] = self.datum.f(x[initial])
        return out

    @cached_property
    def extrema(self) -> Extrema:
        if self.datum.bounds is not None:
            m, M = self.datum.bounds
            if not m > 0:
                raise PositivityError(f"datum infimum must be positive, got {m}")
            return Extrema(float(m), float(M), 0.0)
        return extrema_h(self, self.n_samples, self.seed)

    @property
    def m(self) -> float:
        return self.extrema.m

    @property
    def M(self) -> float:
        return self.extrema.M

    def scaled(self, lam: float) -> "CylinderProblem":
        """Problem for h^(1/lam) in the time variable omega = lam^(p-2) t."""
        beta = lam ** (self.e.p - 2)
        d = self.datum
        datum = BoundaryDatum(lambda x: d.f(x) ** (1.0 / lam),
                              lambda x, w: d.g(x, np.asarray(w) / beta) ** (1.0 / lam),
                              (self.m ** (1.0 / lam), self.M ** (1.0 / lam)))
        return CylinderProblem(self.domain, beta * self.T, self.e, datum, self.n_samples, self.seed,
                               {"scaled_by": lam})


def on_parabolic_boundary(prob: CylinderProblem, pt: SpaceTimePoint, tol=BOUNDARY_TOL) -> bool:
    x = pt.x[None]
    if pt.t == 0 and prob.domain.contains(x, tol=tol)[0]:
        return True
    return bool(prob.domain.on_boundary(x, tol=tol)[0] and 0 <= pt.t < prob.T)


def eval_h(prob: CylinderProblem, pt: SpaceTimePoint) -> float:
    if not on_parabolic_boundary(prob, pt):
        raise DomainError(f"point (x={pt.x.tolist()}, t={pt.t}) is not on the parabolic boundary")
    if pt.t == 0 and prob.domain.contains(pt.x[None], strict=True)[0]:
        val = float(prob.datum.f(pt.x[None])[0])
    else:
        val = float(prob.datum.g(pt.x[None], np.array([pt.t]))[0])
    if not val > 0:
        raise PositivityError(f"datum is not positive at {pt}")
    return val


def sample_parabolic_boundary(prob: CylinderProblem, count: int, rng):
    """Roughly half on the initial slice, half on the lateral boundary."""
    n0 = count // 2
    x0 = prob.domain.sample_closure(n0, rng)
    xs = prob.domain.sample_boundary(count - n0, rng)
    ts = prob.T * rng.random(count - n0)
    corners = prob.domain.corner_points()
    x = np.vstack([x0, xs, corners])
    t = np.concatenate([np.zeros(n0), ts, np.zeros(len(corners))])
    return x, t


def _neighbour_variation(points, values):
    if len(points) < 2:
        return 0.0
    tree = cKDTree(points)
    _, idx = tree.query(points, k=2)
    return float(np.max(np.abs(values - values[idx[:, 1]])))


def extrema_h(prob: CylinderProblem, n_samples: int = 100_000, seed: int = 0) -> Extrema:
    """Sampled inf/sup of the datum over the parabolic boundary.

    ``slack`` is the largest datum difference between nearest-neighbour samples,
    an estimate of how far the sampled extrema can sit from the true ones.
    """
    rng = np.random.default_rng(seed)
    x, t = sample_parabolic_boundary(prob, n_samples, rng)
    vals = prob.h(x, t)
    if not np.all(np.isfinite(vals)):
        raise PositivityError("datum is not finite on the parabolic boundary")
    m, M = float(vals.min()), float(vals.max())
    if not m > 0:
        raise PositivityError(f"datum is not positive on the parabolic boundary (min {m})")
    initial = t == 0
    side = ~initial
    scaled_side = np.column_stack([x[side], t[side] * prob.domain.diameter / prob.T])
    slack = max(_neighbour_variation(x[initial], vals[initial]),
                _neighbour_variation(scaled_side, vals[side]))
    return Extrema(m, M, slack)


def _window_samples(prob, y, s, delta, tau, count, rng):
    """Samples of the closed cylinder B(y, delta) x [s - tau, s + tau] intersected with P_T."""
    xs, ts = [], []
    if s - tau <= 0:
        cand = _ball_points(rng, count, y, delta)
        cand = cand[prob.domain.contains(cand)]
        xs.append(np.vstack([cand, y[None]]) if prob.domain.contains(y[None])[0] else cand)
        ts.append(np.zeros(len(xs[-1])))
    patch = prob.domain.boundary_patch(y, delta, count, rng)
    if len(patch):
        t0, t1 = max(0.0, s - tau), min(prob.T, s + tau)
        tt = t0 + (t1 - t0) * rng.random(len(patch))
        keep = tt < prob.T
        xs.append(patch[keep])
        ts.append(tt[keep])
    if not xs:
        return np.empty((0, prob.e.n)), np.empty(0)
    return np.vstack(xs), np.concatenate(ts)


def local_modulus(prob: CylinderProblem, y, s: float, eps: float, *, n_samples: int = 512,
                  ladder: int = 40, delta_cap: Optional[float] = None,
                  tau_cap: Optional[float] = None, seed: int = 0):
    """Largest rung (delta0, tau0) of a dyadic ladder where the datum oscillates by at most eps.

    Rung j is (delta_cap 2^-j, tau_cap 2^-j). The oscillation of each rung is
    sampled once, replaced by the running maximum over the finer rungs (so the
    predicate is monotone), and the first admissible rung is found by bisection.
    """
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    y = np.asarray(y, dtype=float)
    if delta_cap is None:
        delta_cap = prob.domain.diameter / 2
    if tau_cap is None:
        tau_cap = min(s, prob.T - s) / 2 if s > 0 else prob.T / 2
    center = prob.h(y[None], np.array([s]))[0]
    osc = np.zeros(ladder + 1)
    for j in range(ladder + 1):
        rng = np.random.default_rng([seed, j])
        x, t = _window_samples(prob, y, s, delta_cap * 2.0**-j, tau_cap * 2.0**-j, n_samples, rng)
        if len(x):
            osc[j] = np.max(np.abs(prob.h(x, t) - center))
    envelope = np.maximum.accumulate(osc[::-1])[::-1]
    lo, hi = 0, ladder
    if envelope[ladder] > eps:
        return delta_cap * 2.0**-ladder, tau_cap * 2.0**-ladder
    while lo < hi:
        mid = (lo + hi) // 2
        if envelope[mid] <= eps:
            hi = mid
        else:
            lo = mid + 1
    return delta_cap * 2.0**-lo, tau_cap * 2.0**-lo

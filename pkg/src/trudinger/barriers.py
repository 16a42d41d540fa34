"""Explicit sub- and super-solution barriers anchored at points of the parabolic boundary.

Six families are built here:

* ``initial_sub`` / ``initial_super``: u-space barriers at t = 0, a radial
  quadratic in a ball times an exponential in time.
* ``side_sub_highp`` / ``side_super_highp`` (p > n): log-space bump/indent
  functions on two cusps around a lateral anchor (y, s), profile c r^gamma.
* ``side_sub_lowp`` / ``side_super_lowp`` (2 <= p <= n): the same on a
  spherical shell around an exterior ball, profile r^-gamma. The super
  barrier is built for the lambda-scaled equation and mapped back.

Every barrier is immutable and evaluates vectorized over ``(N, n)`` points
and ``(N,)`` times.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm, qmc

from .calculus import Exponents, Jet, radial_jet
from .errors import (DataInconsistencyError, DomainError, MarginError, MarginSearchFailure,
                     OnRidgeError, WrongRegimeError)
from .problem import BOUNDARY_TOL, CylinderProblem, SpaceTimePoint, local_modulus

GUARD = 1e-6
TIME_EXPONENT_CAP = 40.0
DEFAULT_TAU = 1.0
LAMBDA_FACTOR = 0.9
EPS_HAT_LADDER = 20

R_PLUS, R_MINUS, RIDGE, EXTERIOR, INSIDE = "R+", "R-", "ridge", "exterior", "R"


def _pts(x, n):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def _times(t, count):
    return np.broadcast_to(np.asarray(t, dtype=float), (count,)).astype(float)


@dataclass(frozen=True)
class InitialBarrierParams:
    y: np.ndarray
    eps: float
    delta: float
    lam: float
    ell: float
    kind: str
    placement: str
    h_anchor: float
    m: float
    M: float
    delta0: float
    tau0: float
    tau: Optional[float] = None


@dataclass(frozen=True)
class SideBarrierHighP:
    y: np.ndarray
    s: float
    eps: float
    k: float
    tau: float
    gamma: float
    c: float
    c_min: float
    delta: float
    mu: float
    Lambda: float
    kind: str
    h_anchor: float
    m: float
    M: float
    delta0: float
    tau0: float
    override: bool = False


@dataclass(frozen=True)
class SideBarrierLowP:
    y: np.ndarray
    s: float
    eps: float
    z: np.ndarray
    rho: float
    gamma: float
    k: float
    tau: float
    delta: float
    Lambda: float
    kind: str
    h_anchor: float
    m: float
    M: float
    delta0: float
    tau0: float
    rho0: float
    A: Optional[float] = None
    rho_cap: Optional[float] = None
    lam: float = 1.0
    eps_hat: Optional[float] = None
    theta: Optional[float] = None
    c: float = 1.0
    L: Optional[float] = None
    vartheta: Optional[float] = None
    alpha: Optional[float] = None
    s_hat: Optional[float] = None
    h_hat: Optional[float] = None
    M_hat: Optional[float] = None
    override: bool = False


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


class Barrier:
    """Closed-form space-time barrier with region metadata.

    ``value`` returns the barrier in its native variable (``u`` for the
    initial-time families, ``eta = log u`` for the side families);
    ``u_value``/``eta_value`` convert.
    """

    family = "abstract"
    variable = "u"
    kind = "sub"
    e: Exponents
    params = None

    @property
    def anchor(self) -> SpaceTimePoint:
        raise NotImplementedError

    def value(self, x, t):
        raise NotImplementedError

    def u_value(self, x, t):
        v = self.value(x, t)
        return np.exp(v) if self.variable == "eta" else v

    def eta_value(self, x, t):
        v = self.value(x, t)
        return v if self.variable == "eta" else np.log(v)

    def base_value(self, t):
        raise NotImplementedError

    def expected_anchor_value(self) -> float:
        raise NotImplementedError

    def peak_value(self, t):
        """Largest (sub) or smallest (super) value of the barrier at time t."""
        return np.broadcast_to(self.expected_anchor_value(), np.shape(t)).astype(float)

    def piece(self, x, t):
        raise NotImplementedError

    def jet(self, x, t) -> Jet:
        raise NotImplementedError

    def time_horizon(self, T):
        """Latest sample time at which the barrier is representable in double precision."""
        return T

    def clear_mask(self, x, t):
        """True where the point is outside every guard band, so ``jet`` is defined."""
        return np.ones(len(_pts(x, self.e.n)), dtype=bool)

    def extent(self):
        """(spatial radius around the anchor, time half-width) containing the region."""
        raise NotImplementedError

    def parameter_checks(self) -> dict:
        return {}

    def sample_pieces(self, count, domain, T, seed=0) -> dict:
        raise NotImplementedError

    def surface_pairs(self, count, seed=0):
        """Point pairs straddling the region boundary, for continuity probes."""
        return None

    def to_dict(self) -> dict:
        params = {} if self.params is None else {k: _jsonable(v) for k, v in asdict(self.params).items()}
        a = self.anchor
        return {"family": self.family, "kind": self.kind, "variable": self.variable,
                "p": self.e.p, "n": self.e.n,
                "anchor": {"x": a.x.tolist(), "t": a.t}, "params": params}


def eval_barrier(b: Barrier, pt: SpaceTimePoint) -> float:
    return float(b.value(pt.x[None], np.array([pt.t]))[0])


def eval_barrier_u(b: Barrier, pt: SpaceTimePoint) -> float:
    return float(b.u_value(pt.x[None], np.array([pt.t]))[0])


def eval_barrier_jet(b: Barrier, pt: SpaceTimePoint) -> Jet:
    jet = b.jet(pt.x[None], np.array([pt.t]))
    return Jet(float(jet.a[0]), jet.q[0], jet.X[0])


class ConstantBarrier(Barrier):
    """Degenerate barrier u = m (sub) or u = M (super) used when the anchor datum is extreme."""

    family = "constant"
    variable = "u"

    def __init__(self, value: float, kind: str, anchor: SpaceTimePoint, e: Exponents):
        self.constant = float(value)
        self.kind = kind
        self._anchor = anchor
        self.e = e

    @property
    def anchor(self):
        return self._anchor

    def value(self, x, t):
        return np.full(len(_pts(x, self.e.n)), self.constant)

    def base_value(self, t):
        return np.full(np.shape(t), self.constant)

    def expected_anchor_value(self):
        return self.constant

    def piece(self, x, t):
        return np.full(len(_pts(x, self.e.n)), EXTERIOR, dtype=object)

    def jet(self, x, t):
        k = len(_pts(x, self.e.n))
        return Jet(np.zeros(k), np.zeros((k, self.e.n)), np.zeros((k, self.e.n, self.e.n)))

    def extent(self):
        return 0.0, 0.0

    def sample_pieces(self, count, domain, T, seed=0):
        rng = np.random.default_rng(seed)
        return {EXTERIOR: (domain.sample_closure(count, rng), T * rng.random(count))}

    def to_dict(self):
        d = super().to_dict()
        d["params"] = {"value": self.constant}
        return d


class InitialBarrier(Barrier):
    """u-space barrier exp(kappa t) * (base0 +/- coef * max(0, 1 - r^2/delta^2)).

    kappa = -ell for sub barriers and +ell for super barriers.
    """

    variable = "u"

    def __init__(self, params: InitialBarrierParams, e: Exponents):
        self.params = params
        self.e = e
        self.kind = params.kind
        self.family = f"initial_{params.kind}"
        pr = params
        if pr.kind == "sub":
            self._base0, self._coef, self._sign, self._kappa = pr.m - 2 * pr.eps, pr.h_anchor - pr.m, 1.0, -pr.ell
        else:
            self._base0, self._coef, self._sign, self._kappa = pr.M + 2 * pr.eps, pr.M - pr.h_anchor, -1.0, pr.ell

    @property
    def anchor(self):
        return SpaceTimePoint(self.params.y, 0.0)

    def _radius2(self, x):
        d = _pts(x, self.e.n) - self.params.y
        return np.einsum("ij,ij->i", d, d)

    def value(self, x, t):
        x = _pts(x, self.e.n)
        t = _times(t, len(x))
        bump = np.maximum(0.0, 1.0 - self._radius2(x) / self.params.delta**2)
        return np.exp(self._kappa * t) * (self._base0 + self._sign * self._coef * bump)

    def base_value(self, t):
        return self._base0 * np.exp(self._kappa * np.asarray(t, dtype=float))

    def expected_anchor_value(self):
        pr = self.params
        return pr.h_anchor - 2 * pr.eps if pr.kind == "sub" else pr.h_anchor + 2 * pr.eps

    def peak_value(self, t):
        return self.expected_anchor_value() * np.exp(self._kappa * np.asarray(t, dtype=float))

    def piece(self, x, t):
        inside = self._radius2(x) < self.params.delta**2
        return np.where(inside, INSIDE, EXTERIOR).astype(object)

    def jet(self, x, t):
        x = _pts(x, self.e.n)
        t = _times(t, len(x))
        if not np.all(self.clear_mask(x, t)):
            raise OnRidgeError("point within the guard band of the ball boundary")
        r = np.sqrt(self._radius2(x))
        delta = self.params.delta
        inside = r < delta
        growth = np.exp(self._kappa * t)
        val = self.value(x, t)
        slope = -2.0 * self._sign * self._coef / delta**2
        w = np.where(inside, growth * slope, 0.0)
        q = w[:, None] * (x - self.params.y)
        X = w[:, None, None] * np.eye(self.e.n)
        return Jet(self._kappa * val, q, X)

    def time_horizon(self, T):
        # exp(kappa t) leaves double range for large rates; the inequality only
        # picks up the positive factor exp((p-1) kappa t), so later times add nothing
        ell = self.params.ell
        return min(T, TIME_EXPONENT_CAP / ell) if ell > 0 else T

    def clear_mask(self, x, t):
        r = np.sqrt(self._radius2(x))
        return np.abs(r - self.params.delta) >= GUARD * self.params.delta

    def extent(self):
        return self.params.delta, math.inf

    def parameter_checks(self):
        pr, e = self.params, self.e
        ratio = (pr.h_anchor - pr.m) / (pr.m - 2 * pr.eps) if pr.kind == "sub" else \
            (pr.M - pr.h_anchor) / (pr.h_anchor + 2 * pr.eps)
        lam_formula = e.sigma_p * 2 ** (e.p - 1) / pr.delta**e.p * ratio ** (e.p - 1)
        checks = {
            "margin_positive": (pr.m - 2 * pr.eps > 0, pr.m - 2 * pr.eps),
            "lambda_formula": (math.isclose(pr.lam, lam_formula, rel_tol=1e-12, abs_tol=1e-300),
                               pr.lam - lam_formula),
            "delta_within_modulus": (pr.delta <= pr.delta0 * (1 + 1e-12), pr.delta - pr.delta0),
            "rate_dominates": (pr.ell >= pr.lam / (e.p - 1) * (1 - 1e-12), pr.ell - pr.lam / (e.p - 1)),
        }
        if pr.placement == "boundary":
            if pr.kind == "sub":
                lhs = (pr.h_anchor - 2 * pr.eps) * math.exp(-pr.ell * pr.tau)
                ok = lhs <= (pr.m - 2 * pr.eps) * (1 + 1e-12)
                checks["window_decay"] = (ok, lhs - (pr.m - 2 * pr.eps))
            else:
                lhs = (pr.h_anchor + 2 * pr.eps) * math.exp(pr.ell * pr.tau)
                ok = lhs >= (pr.M + 2 * pr.eps) * (1 - 1e-12)
                checks["window_growth"] = (ok, lhs - (pr.M + 2 * pr.eps))
        return checks

    def sample_pieces(self, count, domain, T, seed=0):
        n = self.e.n
        sob = qmc.Sobol(d=n + 2, scramble=True, seed=seed).random(_pow2(count))[:count]
        sob = np.clip(sob, 1e-12, 1 - 1e-12)
        dirs = norm.ppf(sob[:, 2:])
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        delta = self.params.delta
        r = delta * (GUARD * 10 + (1 - GUARD * 20) * sob[:, 1] ** (1.0 / n))
        x_in = self.params.y + r[:, None] * dirs
        T = self.time_horizon(T)
        t_in = T * sob[:, 0]
        rng = np.random.default_rng(seed)
        x_out, t_out = _exterior_samples(self, count, domain, T, rng)
        return {INSIDE: (x_in, t_in), EXTERIOR: (x_out, t_out)}

    def surface_pairs(self, count, seed=0):
        rng = np.random.default_rng(seed)
        n = self.e.n
        dirs = rng.standard_normal((count, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        t = self.time_horizon(1.0) * rng.random(count)
        delta = self.params.delta
        inner = self.params.y + delta * (1 - 1e-12) * dirs
        outer = self.params.y + delta * (1 + 1e-12) * dirs
        return inner, outer, t


def _pow2(count):
    return 1 << max(1, int(math.ceil(math.log2(max(count, 2)))))


def _exterior_samples(b: Barrier, count, domain, T, rng):
    """Exterior-piece samples: half global, half near the region."""
    half = count // 2
    xg = domain.sample_closure(4 * count, rng)
    tg = T * rng.random(len(xg))
    radius, tw = b.extent()
    a = b.anchor
    xl = a.x + (2 * radius + 1e-12) * (2 * rng.random((4 * count, b.e.n)) - 1)
    if math.isfinite(tw):
        tl = np.clip(a.t + 2 * tw * (2 * rng.random(4 * count) - 1), 0.0, T)
    else:
        tl = T * rng.random(4 * count)
    xs, ts = [], []
    for xx, tt, want in ((xg, tg, count - half), (xl, tl, half)):
        keep = b.piece(xx, tt) == EXTERIOR
        keep &= _clear_of_interfaces(b, xx, tt)
        xs.append(xx[keep][:want])
        ts.append(tt[keep][:want])
    return np.vstack(xs), np.concatenate(ts)


def _clear_of_interfaces(b: Barrier, x, t):
    return b.clear_mask(x, t)


class CuspBarrier(Barrier):
    """Log-space bump (sub) or indent (super) on two cusps around a lateral anchor.

    With omega = lam^(p-2) t and Phi = k tau - k |omega - s_hat| + G(r),
    the barrier is ``lam * (base + sign * max(0, Phi))``, where G is
    ``-c r^gamma`` (p > n) or ``c (r^-gamma - rho^-gamma)`` (p <= n, r measured
    from the exterior-ball center). lam = 1 except for the p <= n super family.
    """

    variable = "eta"

    def __init__(self, params, e: Exponents, family: str):
        self.params = params
        self.e = e
        self.family = family
        self.kind = params.kind
        self.sign = 1.0 if params.kind == "sub" else -1.0
        if isinstance(params, SideBarrierHighP):
            self.profile = "power"
            self.center = np.asarray(params.y, dtype=float)
            self.r_min = 0.0
            self.c = params.c
            self.lam = 1.0
            self.s_hat = params.s
            self.base = math.log(params.m - 2 * params.eps) if params.kind == "sub" else \
                math.log(params.M + 2 * params.eps)
        else:
            self.profile = "inverse"
            self.center = np.asarray(params.z, dtype=float)
            self.r_min = params.rho
            self.c = params.c
            self.lam = params.lam
            if params.kind == "sub":
                self.s_hat = params.s
                self.base = math.log(params.m - 2 * params.eps)
            else:
                self.s_hat = params.s_hat
                self.base = math.log(params.M_hat + 2 * params.eps_hat)
        self.gamma = params.gamma
        self.k = params.k
        self.tau = params.tau
        self.time_scale = self.lam ** (e.p - 2)

    @property
    def anchor(self):
        return SpaceTimePoint(self.params.y, self.params.s)

    def _radius(self, x):
        d = _pts(x, self.e.n) - self.center
        return np.sqrt(np.einsum("ij,ij->i", d, d))

    def _G(self, r):
        g, c = self.gamma, self.c
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.profile == "power":
                return -c * r**g
            return c * (r ** (-g) - self.r_min ** (-g))

    def _dG(self, r):
        g, c = self.gamma, self.c
        if self.profile == "power":
            return -c * g * r ** (g - 1), -c * g * (g - 1) * r ** (g - 2)
        return -c * g * r ** (-g - 1), c * g * (g + 1) * r ** (-g - 2)

    def _phi(self, x, t):
        x = _pts(x, self.e.n)
        t = _times(t, len(x))
        r = self._radius(x)
        omega = self.time_scale * t
        phi = self.k * self.tau - self.k * np.abs(omega - self.s_hat) + self._G(r)
        phi = np.where(r < self.r_min * (1 - 1e-12), -np.inf, phi)
        return phi, r, omega

    def scaled_value(self, x, omega):
        """Barrier in the scaled variables (x, omega) before multiplying by lam."""
        return self.value(x, np.asarray(omega, dtype=float) / self.time_scale) / self.lam

    def value(self, x, t):
        phi, _, _ = self._phi(x, t)
        return self.lam * (self.base + self.sign * np.maximum(0.0, phi))

    def base_value(self, t):
        return np.full(np.shape(t), self.lam * self.base)

    def expected_anchor_value(self):
        pr = self.params
        if pr.kind == "sub":
            return math.log(pr.h_anchor - 2 * pr.eps)
        if isinstance(pr, SideBarrierHighP):
            return math.log(pr.h_anchor + 2 * pr.eps)
        return pr.lam * math.log(pr.h_hat + 2 * pr.eps_hat)

    def piece(self, x, t):
        phi, _, omega = self._phi(x, t)
        inside = phi > 0
        lab = np.full(len(phi), EXTERIOR, dtype=object)
        lab[inside & (omega > self.s_hat)] = R_PLUS
        lab[inside & (omega < self.s_hat)] = R_MINUS
        lab[inside & (omega == self.s_hat)] = RIDGE
        return lab

    def _clear(self, phi, omega):
        near_surface = np.abs(phi) < GUARD * self.k * self.tau
        near_ridge = (phi > 0) & (np.abs(omega - self.s_hat) < GUARD * self.tau)
        return ~(near_surface | near_ridge)

    def clear_mask(self, x, t):
        phi, _, omega = self._phi(x, t)
        return self._clear(phi, omega)

    def spatial_scaled_jet(self, x):
        """Gradient and Hessian of sign * G(r) in the scaled variables."""
        x = _pts(x, self.e.n)
        r = self._radius(x)
        d1, d2 = self._dG(r)
        q, X = radial_jet(self.sign * d1, self.sign * d2, x, self.center)
        return q, X

    def scaled_jet(self, x, t) -> Jet:
        """Jet of the scaled barrier phi(x, omega) (time derivative in omega)."""
        x = _pts(x, self.e.n)
        phi, r, omega = self._phi(x, t)
        if not np.all(self._clear(phi, omega)):
            raise OnRidgeError("point within the guard band of a piece interface")
        inside = phi > 0
        a = np.where(inside, -self.sign * self.k * np.sign(omega - self.s_hat), 0.0)
        q = np.zeros((len(x), self.e.n))
        X = np.zeros((len(x), self.e.n, self.e.n))
        if np.any(inside):
            q[inside], X[inside] = self.spatial_scaled_jet(x[inside])
        return Jet(a, q, X)

    def jet(self, x, t) -> Jet:
        j = self.scaled_jet(x, t)
        lam = self.lam
        return Jet(lam * self.time_scale * j.a, lam * j.q, lam * j.X)

    def cusp_radius(self, v):
        """Outer radius of the cusp cross-section at |omega - s_hat| = v * tau."""
        kappa = self.k * self.tau * (1.0 - np.asarray(v, dtype=float))
        if self.profile == "power":
            return (kappa / self.c) ** (1.0 / self.gamma)
        inv = self.r_min ** (-self.gamma) - kappa / self.c
        with np.errstate(divide="ignore"):
            return np.where(inv > 0, np.abs(inv) ** (-1.0 / self.gamma), np.inf)

    def extent(self):
        base_r = float(self.cusp_radius(0.0))
        if self.profile == "power":
            radius = base_r
        else:
            radius = base_r + self.r_min
        return radius, self.tau / self.time_scale

    def sample_pieces(self, count, domain, T, seed=0):
        n = self.e.n
        sob = qmc.Sobol(d=n + 2, scramble=True, seed=seed).random(_pow2(2 * count))
        sob = np.clip(sob, 1e-12, 1 - 1e-12)
        dirs = norm.ppf(sob[:, 2:])
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        v = 1e-3 + (1 - 2e-3) * sob[:, 0]
        rmax = self.cusp_radius(v)
        rmax = np.where(np.isfinite(rmax), rmax, self.r_min + domain.diameter)
        w = 1e-4 + (1 - 2e-4) * sob[:, 1] ** 2
        r = rmax * w if self.profile == "power" else self.r_min + (rmax - self.r_min) * w
        x = self.center + r[:, None] * dirs
        out = {}
        for label, sgn in ((R_PLUS, 1.0), (R_MINUS, -1.0)):
            omega = self.s_hat + sgn * self.tau * v
            t = omega / self.time_scale
            keep = _clear_of_interfaces(self, x, t) & (self.piece(x, t) == label)
            out[label] = (x[keep][:count], t[keep][:count])
        rng = np.random.default_rng(seed)
        out[EXTERIOR] = _exterior_samples(self, count, domain, T, rng)
        return out

    def ridge_samples(self, count, seed=0):
        """Points of the base slice omega = s_hat strictly inside the cusp base."""
        rng = np.random.default_rng(seed)
        n = self.e.n
        dirs = rng.standard_normal((count, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        rmax = float(self.cusp_radius(0.0))
        if not math.isfinite(rmax):
            rmax = self.r_min + 1.0
        w = 1e-3 + (1 - 2e-3) * rng.random(count)
        r = rmax * w if self.profile == "power" else self.r_min + (rmax - self.r_min) * w
        x = self.center + r[:, None] * dirs
        t = np.full(count, self.s_hat / self.time_scale)
        return x, t

    def surface_pairs(self, count, seed=0):
        rng = np.random.default_rng(seed)
        n = self.e.n
        dirs = rng.standard_normal((count, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        v = 0.05 + 0.9 * rng.random(count)
        side = np.where(rng.random(count) < 0.5, 1.0, -1.0)
        t = (self.s_hat + side * self.tau * v) / self.time_scale
        rs = self.cusp_radius(v)
        ok = np.isfinite(rs)
        inner = self.center + (rs * (1 - 1e-12))[:, None] * dirs
        outer = self.center + (rs * (1 + 1e-12))[:, None] * dirs
        return inner[ok], outer[ok], t[ok]

    def parameter_checks(self):
        pr, e = self.params, self.e
        p, n = e.p, e.n
        close = lambda a, b: math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-14)
        checks = {"margin_positive": (pr.m - 2 * pr.eps > 0, pr.m - 2 * pr.eps),
                  "tau_within_modulus": (pr.tau <= pr.tau0 * (1 + 1e-12), pr.tau - pr.tau0)}
        if isinstance(pr, SideBarrierHighP):
            alpha = (p - n) / (p - 1)
            delta = (pr.k * pr.tau / pr.c) ** (1 / pr.gamma)
            checks["delta_formula"] = (close(pr.delta, delta), pr.delta - delta)
            checks["c_lower_bound"] = (pr.c >= pr.c_min * (1 - 1e-12), pr.c - pr.c_min)
            checks["delta_within_modulus"] = (pr.delta <= pr.delta0 * (1 + 1e-12), pr.delta - pr.delta0)
            if pr.kind == "sub":
                checks["gamma_choice"] = (close(pr.gamma, alpha), pr.gamma - alpha)
                checks["Lambda_zero"] = (abs(pr.Lambda) <= 1e-14, pr.Lambda)
            else:
                gam = alpha / (1 + 2 * pr.k * pr.tau)
                checks["gamma_choice"] = (close(pr.gamma, gam), pr.gamma - gam)
                ident = pr.c * pr.gamma * pr.delta**pr.gamma - pr.Lambda / 2
                checks["c_gamma_delta_identity"] = (abs(ident) <= 1e-12, ident)
            return checks
        beta = (n - p) / (p - 1)
        finite = math.isfinite(pr.delta)
        reach = pr.rho + pr.delta
        checks["gamma_admissible"] = (pr.gamma > beta, pr.gamma - beta)
        checks["shell_finite"] = (finite, pr.delta)
        checks["shell_containment"] = (finite and reach <= pr.delta0 / 2 * (1 + 1e-12), reach - pr.delta0 / 2)
        checks["rho_within_outer_ball"] = (pr.rho <= pr.rho0 * (1 + 1e-12), pr.rho - pr.rho0)
        if pr.kind == "sub":
            checks["rho_cap"] = (pr.rho <= pr.rho_cap * (1 + 1e-12), pr.rho - pr.rho_cap)
            if finite:
                d = pr.rho * ((1 / (1 - pr.rho**pr.gamma * pr.k * pr.tau)) ** (1 / pr.gamma) - 1)
                checks["delta_formula"] = (close(pr.delta, d), pr.delta - d)
        else:
            lhs = pr.lam * pr.k * pr.tau
            rhs = pr.theta**2 * pr.Lambda / pr.gamma
            checks["alpha_lambda_below_one"] = (pr.alpha * pr.lam < 1, pr.alpha * pr.lam)
            checks["theta_gamma_relation"] = (close(lhs, rhs), lhs - rhs)
            rg = pr.c * pr.theta / (pr.k * pr.tau)
            checks["rho_identity"] = (close(pr.rho**pr.gamma, rg), pr.rho**pr.gamma - rg)
            bound = pr.k - pr.L / pr.c ** (p / pr.gamma)
            checks["residual_bound"] = (bound <= 1e-12 * pr.k, bound)
            cond1 = pr.h_hat + 2 * pr.eps_hat - (pr.h_anchor + 2 * pr.eps) ** (1 / pr.lam)
            checks["margin_chain"] = (cond1 <= 1e-12, cond1)
            checks["scaled_rate_below_one"] = (lhs < 1, lhs)
        return checks


# -- construction ---------------------------------------------------------------------------


def _anchor_datum(prob, y, t):
    return float(prob.h(np.asarray(y, dtype=float)[None], np.array([float(t)]))[0])


def _check_margin(prob, eps):
    if not 0 < eps < prob.m / 2:
        raise MarginError(f"eps={eps} must satisfy 0 < eps < m/2 = {prob.m / 2}")


def _data_tol(prob):
    return prob.extrema.slack + 1e-12 * max(1.0, prob.M)


def _is_boundary(prob, y):
    return bool(prob.domain.on_boundary(np.asarray(y, dtype=float)[None])[0])


def _check_side_anchor(prob, y, s):
    if not _is_boundary(prob, y):
        raise DomainError("side barriers need an anchor on the spatial boundary")
    if not 0 < s < prob.T:
        raise DomainError(f"side anchor time must satisfy 0 < s < T, got {s}")


def _initial(prob: CylinderProblem, y, eps, kind, modulus_kw):
    e = prob.e
    y = np.asarray(y, dtype=float)
    _check_margin(prob, eps)
    if not prob.domain.contains(y[None])[0]:
        raise DomainError("initial barrier anchor must lie in the closed domain")
    h0 = _anchor_datum(prob, y, 0.0)
    m, M = prob.m, prob.M
    tol = _data_tol(prob)
    anchor = SpaceTimePoint(y, 0.0)
    if kind == "sub":
        if h0 < m - tol:
            raise DataInconsistencyError(f"h(y,0)={h0} is below the infimum m={m}")
        if h0 <= m:
            return ConstantBarrier(m, "sub", anchor, e)
    else:
        if h0 > M + tol:
            raise DataInconsistencyError(f"h(y,0)={h0} exceeds the supremum M={M}")
        if h0 >= M:
            return ConstantBarrier(M, "super", anchor, e)
    delta0, tau0 = local_modulus(prob, y, 0.0, eps, **modulus_kw)
    boundary = _is_boundary(prob, y)
    if boundary:
        delta = delta0
    else:
        delta = min(delta0, float(prob.domain.distance_to_boundary(y[None])[0]))
    ratio = (h0 - m) / (m - 2 * eps) if kind == "sub" else (M - h0) / (h0 + 2 * eps)
    lam = e.sigma_p * 2 ** (e.p - 1) / delta**e.p * ratio ** (e.p - 1)
    ell = lam / (e.p - 1)
    tau = None
    if boundary:
        tau = tau0
        if kind == "sub":
            ell = max(ell, math.log((h0 - 2 * eps) / (m - 2 * eps)) / tau)
        else:
            ell = max(ell, math.log((M + 2 * eps) / (h0 + 2 * eps)) / tau)
    params = InitialBarrierParams(y, eps, delta, lam, ell, kind, "boundary" if boundary else "interior",
                                  h0, m, M, delta0, tau0, tau)
    return InitialBarrier(params, e)


def make_initial_sub(prob: CylinderProblem, y, eps: float, **modulus_kw) -> Barrier:
    return _initial(prob, y, eps, "sub", modulus_kw)


def make_initial_super(prob: CylinderProblem, y, eps: float, **modulus_kw) -> Barrier:
    return _initial(prob, y, eps, "super", modulus_kw)


def _side_common(prob, y, s, eps, kind):
    y = np.asarray(y, dtype=float)
    _check_margin(prob, eps)
    _check_side_anchor(prob, y, s)
    hs = _anchor_datum(prob, y, s)
    tol = _data_tol(prob)
    anchor = SpaceTimePoint(y, s)
    if kind == "sub":
        if hs < prob.m - tol:
            raise DataInconsistencyError(f"h(y,s)={hs} is below the infimum m={prob.m}")
        if hs <= prob.m:
            return y, hs, ConstantBarrier(prob.m, "sub", anchor, prob.e)
    else:
        if hs > prob.M + tol:
            raise DataInconsistencyError(f"h(y,s)={hs} exceeds the supremum M={prob.M}")
        if hs >= prob.M:
            return y, hs, ConstantBarrier(prob.M, "super", anchor, prob.e)
    return y, hs, None


def _highp(prob, y, s, eps, kind, c, tau, modulus_kw):
    e = prob.e
    if not e.p > e.n:
        raise WrongRegimeError(f"p > n barriers need p > n (p={e.p}, n={e.n})")
    y, hs, const = _side_common(prob, y, s, eps, kind)
    if const is not None:
        return const
    m, M, p = prob.m, prob.M, e.p
    delta0, tau0 = local_modulus(prob, y, s, eps, **modulus_kw)
    if tau is None:
        tau = min(tau0, DEFAULT_TAU)
    alpha = (p - e.n) / (p - 1)
    if kind == "sub":
        ktau = math.log((hs - 2 * eps) / (m - 2 * eps))
        gamma = alpha
        mu = (gamma + p * (1 - gamma)) / p
        c_min = ktau**mu / (gamma**gamma * tau ** (gamma / p))
    else:
        ktau = math.log((M + 2 * eps) / (hs + 2 * eps))
        gamma = alpha / (1 + 2 * ktau)
        Lam = alpha - gamma
        mu = p * (1 - gamma) / gamma + 2
        c_min = (2 * ktau**mu / (tau * Lam * gamma ** (p - 1))) ** (gamma / p)
    override = c is not None
    if c is None:
        c = max(c_min, ktau / delta0**gamma)
    delta = (ktau / c) ** (1 / gamma)
    params = SideBarrierHighP(y, s, eps, ktau / tau, tau, gamma, c, c_min, delta, mu, alpha - gamma,
                              kind, hs, m, M, delta0, tau0, override)
    return CuspBarrier(params, e, f"side_{kind}_highp")


def make_side_sub_highp(prob: CylinderProblem, y, s: float, eps: float, *, c=None, tau=None,
                        **modulus_kw) -> Barrier:
    """Bump barrier for p > n; ``c``/``tau`` override the default parameter choices."""
    return _highp(prob, y, s, eps, "sub", c, tau, modulus_kw)


def make_side_super_highp(prob: CylinderProblem, y, s: float, eps: float, *, c=None, tau=None,
                          **modulus_kw) -> Barrier:
    return _highp(prob, y, s, eps, "super", c, tau, modulus_kw)


def _lowp_regime(prob):
    e = prob.e
    if not 2 <= e.p <= e.n:
        raise WrongRegimeError(f"p <= n barriers need 2 <= p <= n (p={e.p}, n={e.n})")
    if prob.domain.outer_ball_radius is None:
        from .errors import UnsupportedDomainError
        raise UnsupportedDomainError(f"domain kind {prob.domain.kind!r} has no outer ball condition")


def make_side_sub_lowp(prob: CylinderProblem, y, s: float, eps: float, *, gamma=None, rho=None,
                       tau=None, **modulus_kw) -> Barrier:
    """Bump barrier on a shell around an exterior ball (2 <= p <= n).

    ``rho`` overrides the radius selection (used by violation probes).
    """
    _lowp_regime(prob)
    e = prob.e
    y, hs, const = _side_common(prob, y, s, eps, "sub")
    if const is not None:
        return const
    p, n, m = e.p, e.n, prob.m
    beta = (n - p) / (p - 1)
    if gamma is None:
        gamma = beta + 1.0
    delta0, tau0 = local_modulus(prob, y, s, eps, **modulus_kw)
    if tau is None:
        tau = min(tau0, DEFAULT_TAU)
    ktau = math.log((hs - 2 * eps) / (m - 2 * eps))
    k = ktau / tau
    A = (gamma**p / k) ** (gamma / (p * (1 + gamma)))
    rho0 = prob.domain.outer_ball_radius
    rho_cap = min(rho0, ktau ** (-1 / gamma), (A / (1 + ktau * A)) ** (1 / gamma))
    override = rho is not None
    if rho is None:
        reach = delta0 / 2
        rho_contain = (reach**gamma / (1 + ktau * reach**gamma)) ** (1 / gamma)
        rho = min(rho_cap, rho_contain)
    shrink = 1 - rho**gamma * ktau
    delta = rho * ((1 / shrink) ** (1 / gamma) - 1) if shrink > 0 else math.inf
    z = prob.domain.outer_ball(y, rho) if rho <= rho0 else y + rho * prob.domain.normal(y)
    params = SideBarrierLowP(y, s, eps, z, rho, gamma, k, tau, delta, gamma - beta, "sub", hs,
                             m, prob.M, delta0, tau0, rho0, A=A, rho_cap=rho_cap, override=override)
    return CuspBarrier(params, e, "side_sub_lowp")


def choose_theta_gamma(lam_ktau: float, beta: float):
    """theta in (0,1) and gamma > beta with lam*k*tau = theta^2 (gamma - beta)/gamma.

    For beta > 0 this needs theta^2 > lam*k*tau: theta = 1/2 when that suffices,
    otherwise the midpoint of (sqrt(lam*k*tau), 1). For beta = 0 theta is
    forced to sqrt(lam*k*tau) and gamma is free; gamma = 1 is used.
    """
    if not 0 < lam_ktau < 1:
        raise MarginSearchFailure(f"scaled rate lam*k*tau={lam_ktau} must lie in (0, 1)")
    if beta == 0:
        return math.sqrt(lam_ktau), 1.0
    theta = 0.5 if lam_ktau < 0.25 else 0.5 * (1 + math.sqrt(lam_ktau))
    gamma = beta / (1 - lam_ktau / theta**2)
    return theta, gamma


def make_side_super_lowp(prob: CylinderProblem, y, s: float, eps: float, *, c=None, tau=None,
                         lam=None, **modulus_kw) -> Barrier:
    """Indent barrier for 2 <= p <= n built in the lambda-scaled variables.

    The returned barrier evaluates eta(x, t) = lam * phi(x, lam^(p-2) t).
    """
    _lowp_regime(prob)
    e = prob.e
    y, hs, const = _side_common(prob, y, s, eps, "super")
    if const is not None:
        return const
    p, n, m, M = e.p, e.n, prob.m, prob.M
    alpha = math.log((M + 2 * eps) / (hs + 2 * eps))
    if lam is None:
        lam = LAMBDA_FACTOR / alpha
    h_hat = hs ** (1 / lam)
    M_hat = M ** (1 / lam)
    eps_hat = None
    for j in range(EPS_HAT_LADDER + 1):
        cand = eps * 2.0**-j
        ok1 = h_hat + 2 * cand <= (hs + 2 * eps) ** (1 / lam)
        ok2 = lam * math.log((M_hat + 2 * cand) / (h_hat + 2 * cand)) < 1
        if ok1 and ok2:
            eps_hat = cand
            break
    if eps_hat is None:
        raise MarginSearchFailure("no eps_hat on the dyadic ladder satisfies the margin conditions")
    scaled = prob.scaled(lam)
    s_hat = lam ** (p - 2) * s
    delta0, tau0 = local_modulus(scaled, y, s_hat, eps_hat, **modulus_kw)
    if tau is None:
        tau = min(tau0, DEFAULT_TAU)
    ktau = math.log((M_hat + 2 * eps_hat) / (h_hat + 2 * eps_hat))
    k = ktau / tau
    beta = (n - p) / (p - 1)
    theta, gamma = choose_theta_gamma(lam * ktau, beta)
    Lam = gamma - beta
    vartheta = p * (1 + gamma) - gamma
    L = Lam * gamma ** (p - 1) * ktau ** (vartheta / gamma) * \
        ((1 - theta) ** (p * (1 + gamma)) / theta**vartheta) ** (1 / gamma)
    rho0 = prob.domain.outer_ball_radius
    override = c is not None
    if c is None:
        reach = delta0 / 2
        c = min((L / k) ** (gamma / p), ktau * (1 - theta) * reach**gamma / theta)
        if math.isfinite(rho0):
            c = min(c, ktau * rho0**gamma / theta)
    rho = (c * theta / ktau) ** (1 / gamma)
    delta = rho * ((1 / (1 - theta)) ** (1 / gamma) - 1)
    z = prob.domain.outer_ball(y, rho) if rho <= rho0 else y + rho * prob.domain.normal(y)
    params = SideBarrierLowP(y, s, eps, z, rho, gamma, k, tau, delta, Lam, "super", hs, m, M,
                             delta0, tau0, rho0, lam=lam, eps_hat=eps_hat, theta=theta, c=c, L=L,
                             vartheta=vartheta, alpha=alpha, s_hat=s_hat, h_hat=h_hat, M_hat=M_hat,
                             override=override)
    return CuspBarrier(params, e, "side_super_lowp")


FAMILIES = {
    "initial_sub": make_initial_sub,
    "initial_super": make_initial_super,
    "side_sub_highp": make_side_sub_highp,
    "side_super_highp": make_side_super_highp,
    "side_sub_lowp": make_side_sub_lowp,
    "side_super_lowp": make_side_super_lowp,
}


def make_barrier(prob: CylinderProblem, family: str, y, s: float, eps: float, **kw) -> Barrier:
    if family not in FAMILIES:
        raise DomainError(f"unknown barrier family {family!r}")
    if family.startswith("initial"):
        if s != 0:
            raise DomainError("initial barriers are anchored at t = 0")
        return FAMILIES[family](prob, y, eps, **kw)
    return FAMILIES[family](prob, y, s, eps, **kw)

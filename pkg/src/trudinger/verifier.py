"""Numerical certification of barrier inequalities and jet identities.

Every check here evaluates closed-form jets, so tolerances only absorb
floating-point error: a sample passes when its residual has the right sign
up to ``RESIDUAL_TOL`` times a per-sample magnitude scale (the sum of the
absolute values of the terms that make up the residual).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .barriers import (EXTERIOR, INSIDE, R_MINUS, R_PLUS, Barrier, ConstantBarrier, CuspBarrier,
                       InitialBarrier, SideBarrierLowP)
from .calculus import Exponents, Jet, _abs_pow, kp_form, kp_lambda_form, lp_form, tp_form
from .errors import DomainError, PositivityError
from .problem import CylinderProblem, SpaceTimePoint, sample_parabolic_boundary

RESIDUAL_TOL = 1e-9
CONTINUITY_TOL = 1e-9
ORDER_TOL = 1e-12
IDENTITY_TOL = 1e-10


@dataclass(frozen=True)
class ResidualSample:
    pt: SpaceTimePoint
    piece: str
    residual: float
    orientation: str
    scale: float = 0.0

    @property
    def passed(self) -> bool:
        tol = RESIDUAL_TOL * self.scale
        return self.residual >= -tol if self.orientation == "sub" else self.residual <= tol


@dataclass
class CheckResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "pass": bool(self.passed), "metrics": _clean(self.metrics)}


@dataclass
class VerificationReport:
    barrier: dict
    pieces: dict
    ridge: Optional[CheckResult]
    ordering: dict
    extension: CheckResult
    continuity: CheckResult
    parameters: CheckResult

    @property
    def checks(self):
        out = [CheckResult(f"residual[{k}]", v["pass"], v) for k, v in self.pieces.items()]
        if self.ridge is not None:
            out.append(self.ridge)
        out.extend(self.ordering.values())
        out.extend([self.extension, self.continuity, self.parameters])
        return out

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def samples(self) -> int:
        return int(sum(v["count"] for v in self.pieces.values()))

    def failures(self):
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self):
        return {"barrier": _clean(self.barrier), "pass": self.passed, "samples": self.samples,
                "checks": [c.to_dict() for c in self.checks], "failures": self.failures()}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


# -- residuals ------------------------------------------------------------------------------


def _lp_magnitude(q, X, e: Exponents):
    """Sum of the absolute values of the two terms of L_p."""
    qn2 = np.einsum("...i,...i->...", q, q)
    tr = np.abs(np.trace(X, axis1=-2, axis2=-1))
    safe = np.where(qn2 == 0, 1.0, qn2)
    dirn = np.abs(np.einsum("...i,...ij,...j->...", q, X, q)) / safe
    if e.p == 2:
        return tr
    return np.where(qn2 == 0, 0.0, _abs_pow(np.sqrt(qn2), e.p - 2) * (tr + (e.p - 2) * dirn))


def kp_scale(jet: Jet, e: Exponents, lam: float = 1.0):
    qn = np.sqrt(np.einsum("...i,...i->...", jet.q, jet.q))
    return _lp_magnitude(jet.q, jet.X, e) + lam * (e.p - 1) * _abs_pow(qn, e.p) + (e.p - 1) * np.abs(jet.a)


def tp_scale(r, jet: Jet, e: Exponents):
    return _lp_magnitude(jet.q, jet.X, e) + (e.p - 1) * _abs_pow(r, e.p - 2) * np.abs(jet.a)


def uses_scaled_operator(b: Barrier) -> bool:
    return isinstance(b, CuspBarrier) and isinstance(b.params, SideBarrierLowP) and b.kind == "super"


def residuals(b: Barrier, x, t):
    """Batched residuals and magnitude scales of the barrier's differential inequality.

    u-space barriers use T_p, eta-space barriers K_p, and the scaled indent
    barrier the lambda-weighted form on its scaled jet.
    """
    e = b.e
    if isinstance(b, ConstantBarrier):
        k = len(np.atleast_2d(x))
        return np.zeros(k), np.zeros(k)
    if b.variable == "u":
        jet = b.jet(x, t)
        val = b.value(x, t)
        return np.atleast_1d(tp_form(val, jet, e)), np.atleast_1d(tp_scale(val, jet, e))
    if uses_scaled_operator(b):
        jet = b.scaled_jet(x, t)
        return (np.atleast_1d(kp_lambda_form(jet, b.lam, e)),
                np.atleast_1d(kp_scale(jet, e, b.lam)))
    jet = b.jet(x, t)
    return np.atleast_1d(kp_form(jet, e)), np.atleast_1d(kp_scale(jet, e))


def residual_at(b: Barrier, pt: SpaceTimePoint) -> ResidualSample:
    x, t = pt.x[None], np.array([pt.t])
    res, scale = residuals(b, x, t)
    return ResidualSample(pt, str(b.piece(x, t)[0]), float(res[0]), b.kind, float(scale[0]))


def _piece_stats(b: Barrier, x, t):
    if len(x) == 0:
        return {"count": 0, "min": None, "max": None, "worst_normalized": None, "pass": True}
    res, scale = residuals(b, x, t)
    sgn = 1.0 if b.kind == "sub" else -1.0
    margin = sgn * res + RESIDUAL_TOL * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.where(scale > 0, sgn * res / np.where(scale > 0, scale, 1.0), 0.0)
    return {"count": int(len(x)), "min": float(res.min()), "max": float(res.max()),
            "worst_normalized": float(norm.min()), "pass": bool(np.all(margin >= 0))}


# -- ridge ----------------------------------------------------------------------------------


def ridge_check(b: Barrier, x, t=None) -> CheckResult:
    """Piece inequality on the slice t = s at the adverse one-sided time slope.

    Sub barriers are tested with a = +k, super barriers with a = -k; the
    one-sided slopes of the value on either side of the slice are compared
    with -/+k by difference quotients.
    """
    if not isinstance(b, CuspBarrier):
        raise DomainError("ridge checks apply to cusp barriers only")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ts = b.s_hat / b.time_scale
    if t is not None and np.any(np.abs(np.asarray(t, dtype=float) - ts) > 1e-12 * max(1.0, ts)):
        raise DomainError("ridge points must lie on the slice t = s")
    phi, _, _ = b._phi(x, np.full(len(x), ts))
    if np.any(phi <= 0):
        raise DomainError("ridge point outside the cusp base")
    e = b.e
    q, X = b.spatial_scaled_jet(x)
    slope = b.k if b.kind == "sub" else -b.k
    jet = Jet(np.full(len(x), slope), q, X)
    if uses_scaled_operator(b):
        res, scale = kp_lambda_form(jet, b.lam, e), kp_scale(jet, e, b.lam)
    else:
        res, scale = kp_form(jet, e), kp_scale(jet, e)
    res, scale = np.atleast_1d(res), np.atleast_1d(scale)
    sgn = 1.0 if b.kind == "sub" else -1.0
    ok_sign = np.all(sgn * res + RESIDUAL_TOL * scale >= 0)
    # one-sided slopes of the scaled value in omega
    dw = 1e-6 * b.tau
    w0 = np.full(len(x), b.s_hat)
    v0 = b.scaled_value(x, w0)
    up = (b.scaled_value(x, w0 + dw) - v0) / dw
    down = (v0 - b.scaled_value(x, w0 - dw)) / dw
    expect_up, expect_down = -b.sign * b.k, b.sign * b.k
    slope_err = max(float(np.max(np.abs(up - expect_up))), float(np.max(np.abs(down - expect_down))))
    ok_slope = slope_err <= 1e-6 * max(1.0, b.k)
    return CheckResult("ridge", bool(ok_sign and ok_slope),
                       {"count": int(len(x)), "min": float(res.min()), "max": float(res.max()),
                        "slope_error": slope_err})


# -- ordering and extension -----------------------------------------------------------------


def _le(a, b):
    return a <= b + ORDER_TOL * np.maximum(1.0, np.abs(b))


def _window_points(b: Barrier, prob: CylinderProblem, count, rng):
    """Parabolic-boundary samples concentrated around the barrier's anchor."""
    radius, tw = b.extent()
    a = b.anchor
    if not math.isfinite(radius) or radius <= 0:
        return np.empty((0, prob.e.n)), np.empty(0)
    radius = min(radius, prob.domain.diameter)
    xs, ts = [], []
    patch = prob.domain.boundary_patch(a.x, radius, count, rng)
    if len(patch):
        if math.isfinite(tw):
            lo, hi = max(0.0, a.t - tw), min(prob.T, a.t + tw)
        else:
            lo, hi = 0.0, prob.T
        tt = lo + (hi - lo) * rng.random(len(patch))
        keep = tt < prob.T
        xs.append(patch[keep])
        ts.append(tt[keep])
    if isinstance(b, InitialBarrier):
        d = rng.standard_normal((count, prob.e.n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        cand = a.x + (radius * rng.random(count) ** (1 / prob.e.n))[:, None] * d
        cand = cand[prob.domain.contains(cand)]
        xs.append(cand)
        ts.append(np.zeros(len(cand)))
    if not xs:
        return np.empty((0, prob.e.n)), np.empty(0)
    return np.vstack(xs), np.concatenate(ts)


def _global_points(b: Barrier, prob: CylinderProblem, count, rng):
    horizon = b.time_horizon(prob.T)
    x = prob.domain.sample_closure(count, rng)
    t = horizon * rng.random(count)
    radius, tw = b.extent()
    if math.isfinite(radius) and radius > 0:
        a = b.anchor
        xl = a.x + radius * (2 * rng.random((count, prob.e.n)) - 1)
        keep = prob.domain.contains(xl)
        xl = xl[keep]
        if math.isfinite(tw):
            tl = np.clip(a.t + tw * (2 * rng.random(len(xl)) - 1), 0, horizon)
        else:
            tl = horizon * rng.random(len(xl))
        x, t = np.vstack([x, xl]), np.concatenate([t, tl])
    return x, t


def ordering_checks(b: Barrier, prob: CylinderProblem, n_boundary=10_000, seed=0) -> dict:
    """Items (i)-(iv): anchor value, global bound, bounds on the region, ordering against h."""
    rng = np.random.default_rng([seed, 1])
    xb, tb = sample_parabolic_boundary(prob, n_boundary, rng)
    xw, tw = _window_points(b, prob, n_boundary, rng)
    x, t = np.vstack([xb, xw]), np.concatenate([tb, tw])
    keep = t <= b.time_horizon(prob.T)
    x, t = x[keep], t[keep]
    h = prob.h(x, t)
    if np.any(~(h > 0)):
        raise PositivityError("datum is not positive on the parabolic boundary")
    val = b.value(x, t)
    target = np.log(h) if b.variable == "eta" else h
    sub = b.kind == "sub"
    a = b.anchor
    out = {}

    v0 = float(b.value(a.x[None], np.array([a.t]))[0])
    expect = b.expected_anchor_value()
    err = abs(v0 - expect)
    out["i"] = CheckResult("ordering(i) anchor value", err <= 1e-12 * max(1.0, abs(expect)),
                           {"value": v0, "expected": expect, "error": err})

    xg, tg = _global_points(b, prob, n_boundary, rng)
    vg = b.value(xg, tg)
    base = b.base_value(tg)
    ok2 = np.all(_le(base, vg)) if sub else np.all(_le(vg, base))
    out["ii"] = CheckResult("ordering(ii) global bound", bool(ok2), {"count": int(len(xg))})

    if isinstance(b, InitialBarrier):
        eps = b.params.eps
        d2 = np.einsum("ij,ij->i", xw - a.x, xw - a.x)
        sel = (tw == 0) & (d2 <= b.params.delta**2)
        hv, vv = prob.h(xw[sel], tw[sel]), b.value(xw[sel], tw[sel])
        if sub:
            ok = np.all(_le(b.base_value(0.0), vv)) and np.all(_le(vv, hv - eps))
        else:
            ok = np.all(_le(hv + eps, vv))
        out["ii"] = CheckResult("ordering(ii) initial slice", bool(ok2 and ok),
                                {"count": int(sel.sum()), "global_count": int(len(xg))})
        peak = b.peak_value(tg)
        ok3 = np.all(_le(vg, peak)) if sub else np.all(_le(peak, vg))
        out["iii"] = CheckResult("ordering(iii) time envelope", bool(ok3), {"count": int(len(xg))})
    elif isinstance(b, CuspBarrier):
        inside = b.piece(x, t) != EXTERIOR
        vi, ti, hi = val[inside], target[inside], b.base_value(t[inside])
        if sub:
            ok3 = np.all(_le(hi, vi)) and np.all(_le(vi, expect)) and np.all(_le(expect, ti))
        else:
            ok3 = np.all(_le(ti, expect)) and np.all(_le(expect, vi)) and np.all(_le(vi, hi))
        out["iii"] = CheckResult("ordering(iii) region bounds", bool(ok3), {"count": int(inside.sum())})
    else:
        out["iii"] = CheckResult("ordering(iii) region bounds", True, {"count": 0})

    gap = target - val if sub else val - target
    ok4 = np.all(gap >= -ORDER_TOL * np.maximum(1.0, np.abs(target)))
    out["iv"] = CheckResult("ordering(iv) parabolic boundary", bool(ok4),
                            {"count": int(len(x)), "min_gap": float(gap.min())})
    return out


def extension_check(b: Barrier, prob: CylinderProblem, count=10_000, seed=0) -> CheckResult:
    """Extension-lemma hypotheses: w >= base (sub) or w <= base (super), equality off the region."""
    rng = np.random.default_rng([seed, 2])
    x, t = _global_points(b, prob, count, rng)
    v = b.value(x, t)
    base = b.base_value(t)
    ok_side = np.all(_le(base, v)) if b.kind == "sub" else np.all(_le(v, base))
    off = b.piece(x, t) == EXTERIOR
    dev = np.abs(v[off] - base[off])
    ok_eq = np.all(dev <= ORDER_TOL * np.maximum(1.0, np.abs(base[off])))
    return CheckResult("extension hypotheses", bool(ok_side and ok_eq),
                       {"count": int(len(x)), "exterior_count": int(off.sum()),
                        "max_exterior_deviation": float(dev.max()) if len(dev) else 0.0})


def continuity_check(b: Barrier, count=2000, seed=0) -> CheckResult:
    pairs = b.surface_pairs(count, seed=seed)
    if pairs is None or len(pairs[0]) == 0:
        return CheckResult("continuity", True, {"count": 0})
    inner, outer, t = pairs
    vi, vo = b.value(inner, t), b.value(outer, t)
    jump = np.abs(vi - vo)
    scale = np.maximum(1.0, np.abs(vi))
    return CheckResult("continuity", bool(np.all(jump <= CONTINUITY_TOL * scale)),
                       {"count": int(len(t)), "max_jump": float(jump.max())})


def parameter_check(b: Barrier) -> CheckResult:
    checks = b.parameter_checks()
    failed = [k for k, (ok, _) in checks.items() if not ok]
    return CheckResult("parameters", not failed,
                       {"failed": failed, "values": {k: float(v) for k, (_, v) in checks.items()}})


def sweep(b: Barrier, prob: CylinderProblem, n_per_piece=10_000, n_boundary=10_000,
          n_ridge=1000, seed=0) -> VerificationReport:
    """Run every check on one barrier and aggregate the outcomes."""
    pieces = {}
    for label, (x, t) in b.sample_pieces(n_per_piece, prob.domain, prob.T, seed=seed).items():
        pieces[label] = _piece_stats(b, x, t)
    ridge = None
    if isinstance(b, CuspBarrier):
        xr, tr = b.ridge_samples(n_ridge, seed=seed)
        ridge = ridge_check(b, xr, tr)
    return VerificationReport(b.to_dict(), pieces, ridge, ordering_checks(b, prob, n_boundary, seed),
                              extension_check(b, prob, n_boundary, seed), continuity_check(b, seed=seed),
                              parameter_check(b))


# -- jet identities -------------------------------------------------------------------------


def log_jet_to_u(eta: float, jet: Jet):
    """Value and jet of u = exp(eta) from the jet of eta (chain rule)."""
    u = np.exp(eta)
    q = np.asarray(jet.q)
    X = np.asarray(jet.X) + q[..., :, None] * q[..., None, :]
    X = 0.5 * (X + np.swapaxes(X, -1, -2))
    return u, Jet(u * jet.a, np.asarray(u)[..., None] * q, np.asarray(u)[..., None, None] * X)


def log_equiv_check(eta, jet: Jet, e: Exponents):
    """(|T_p(u, jet_u) - u^(p-1) K_p(jet_eta)|, magnitude scale) for u = exp(eta)."""
    u, ju = log_jet_to_u(eta, jet)
    if np.any(~(np.asarray(u) > 0)):
        raise PositivityError("u must be positive")
    lhs = tp_form(u, ju, e)
    w = _abs_pow(u, e.p - 1)
    rhs = w * kp_form(jet, e)
    scale = np.maximum(tp_scale(u, ju, e), w * kp_scale(jet, e))
    return np.abs(lhs - rhs), scale


def scaled_jet(jet: Jet, alpha: float, e: Exponents) -> Jet:
    """Jet of phi(z, w) = eta(z/alpha, w/alpha^p) at (alpha x, alpha^p t)."""
    alpha = np.asarray(alpha, dtype=float)
    return Jet(jet.a / alpha**e.p, jet.q / alpha[..., None], jet.X / alpha[..., None, None] ** 2)


def scaling_check(jet: Jet, alpha: float, e: Exponents):
    """(|K_p(jet) - alpha^p K_p(scaled jet)|, magnitude scale)."""
    if not np.all(np.asarray(alpha) > 0):
        raise DomainError("alpha must be positive")
    k0 = kp_form(jet, e)
    k1 = kp_form(scaled_jet(jet, alpha, e), e)
    return np.abs(k0 - alpha**e.p * k1), kp_scale(jet, e)


def separation_check(phi: float, q, X, lam: float, ell: float, t: float, e: Exponents):
    """T_p of psi = phi * exp(ell t) from the spatial jet (q, X) of phi.

    If Delta_p phi + lam phi^(p-1) >= 0 and ell + lam/(p-1) <= 0 the result is >= 0;
    the mirrored statement holds for the reversed inequalities.
    """
    if not phi > 0:
        raise PositivityError("phi must be positive")
    g = math.exp(ell * t)
    psi = phi * g
    jet = Jet(ell * psi, g * np.asarray(q, dtype=float), g * np.asarray(X, dtype=float))
    return tp_form(psi, jet, e)


def operator_residual(b: Barrier, x, t):
    """K_p of an eta-space barrier in the original variables (cross-check for scaled barriers)."""
    jet = b.jet(x, t)
    return np.atleast_1d(kp_form(jet, b.e))

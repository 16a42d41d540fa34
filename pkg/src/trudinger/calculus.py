"""Pointwise jet forms and radial identities for Trudinger's equation.

Everything here is closed-form double arithmetic. The jet forms accept
either a single jet (``q`` of shape ``(n,)``, ``X`` of shape ``(n, n)``)
or a batch (``q`` of shape ``(..., n)``, ``X`` of shape ``(..., n, n)``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidInputError

REL_TOL = 1e-12
ABS_TOL = 1e-14


@dataclass(frozen=True)
class Exponents:
    """The exponent ``p`` of the p-Laplacian and the space dimension ``n``."""

    p: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.p) or self.p < 2:
            raise InvalidInputError(f"p must satisfy p >= 2, got {self.p}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", float(self.p))

    @property
    def sigma_p(self) -> float:
        return self.p + self.n - 2


@dataclass(frozen=True)
class Jet:
    """Time slope ``a``, gradient ``q`` and symmetric Hessian ``X`` at a point."""

    a: float | np.ndarray
    q: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if X.shape != q.shape + q.shape[-1:]:
            raise InvalidInputError(f"Hessian shape {X.shape} does not match gradient shape {q.shape}")
        _check_symmetric(X)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float) if np.ndim(self.a) else float(self.a))

    @classmethod
    def zero(cls, n: int) -> "Jet":
        return cls(0.0, np.zeros(n), np.zeros((n, n)))


@dataclass(frozen=True)
class RadialProfile:
    """Value and first two radial derivatives of f(r) at radius r > 0."""

    value: float
    d1: float
    d2: float
    r: float


@dataclass(frozen=True)
class PowerRadialParams:
    """Parameters of the power profile ``sign * c * r**gamma``."""

    c: float
    gamma: float
    sign: int = 1
    lam: float = 0.0

    def __post_init__(self):
        if self.c <= 0:
            raise InvalidInputError("amplitude c must be positive")
        if self.gamma == 0:
            raise InvalidInputError("gamma must be nonzero")
        if self.sign not in (1, -1):
            raise InvalidInputError("sign must be +1 or -1")

    def Lambda(self, e: Exponents) -> float:
        return power_lambda(self.gamma, e)


def power_lambda(gamma: float, e: Exponents) -> float:
    """Lambda = (p - n)/(p - 1) - gamma."""
    return (e.p - e.n) / (e.p - 1) - gamma


def _check_symmetric(X):
    if X.ndim < 2 or not np.array_equal(X, np.swapaxes(X, -1, -2)):
        raise InvalidInputError("Hessian X must be symmetric")


def lp_from_invariants(qnorm2, trX, qXq, p):
    """L_p from |q|^2, tr(X) and q.X.q, using the unit-gradient form.

    ``|q|^(p-4) q_i q_j X_ij`` is evaluated as ``|q|^(p-2) * (qhat.X.qhat)`` so
    small gradients with 2 <= p < 4 do not overflow. At q = 0 the value is
    tr(X) for p = 2 and 0 otherwise.
    """
    qnorm2 = np.asarray(qnorm2, dtype=float)
    trX = np.asarray(trX, dtype=float)
    qXq = np.asarray(qXq, dtype=float)
    if p == 2:
        return trX + 0.0 * qnorm2
    zero = qnorm2 == 0
    safe = np.where(zero, 1.0, qnorm2)
    directional = qXq / safe
    weight = np.exp(0.5 * (p - 2) * np.log(safe))
    out = weight * (trX + (p - 2) * directional)
    return np.where(zero, 0.0, out)


def lp_form(q, X, e: Exponents):
    """Differentiated p-Laplacian L_p(q, X); batched over leading axes."""
    q = np.asarray(q, dtype=float)
    X = np.asarray(X, dtype=float)
    _check_symmetric(X)
    qnorm2 = np.einsum("...i,...i->...", q, q)
    trX = np.trace(X, axis1=-2, axis2=-1)
    qXq = np.einsum("...i,...ij,...j->...", q, X, q)
    out = lp_from_invariants(qnorm2, trX, qXq, e.p)
    return float(out) if out.ndim == 0 else out


def _abs_pow(x, expo):
    x = np.abs(np.asarray(x, dtype=float))
    if expo == 0:
        return np.ones_like(x)
    with np.errstate(divide="ignore"):
        return np.where(x == 0, 0.0, np.exp(expo * np.log(np.where(x == 0, 1.0, x))))


def tp_form(r, jet: Jet, e: Exponents):
    """T_p(r, a, q, X) = L_p(q, X) - (p - 1)|r|^(p-2) a."""
    out = lp_form(jet.q, jet.X, e) - (e.p - 1) * _abs_pow(r, e.p - 2) * jet.a
    return float(out) if np.ndim(out) == 0 else out


def kp_form(jet: Jet, e: Exponents):
    """K_p(a, q, X) = L_p(q, X) + (p - 1)|q|^p - (p - 1) a."""
    return kp_lambda_form(jet, 1.0, e)


def kp_lambda_form(jet: Jet, lam: float, e: Exponents):
    """K_p with the gradient term weighted by ``lam``; lam = 1 gives kp_form."""
    if not lam > 0:
        raise InvalidInputError(f"lambda must be positive, got {lam}")
    qnorm = np.sqrt(np.einsum("...i,...i->...", jet.q, jet.q))
    out = lp_form(jet.q, jet.X, e) + lam * (e.p - 1) * _abs_pow(qnorm, e.p) - (e.p - 1) * jet.a
    return float(out) if np.ndim(out) == 0 else out


def radial_plaplacian(prof: RadialProfile, e: Exponents) -> float:
    """p-Laplacian of a radial function from its radial derivatives."""
    if not prof.r > 0:
        raise DomainError(f"radius must be positive, got {prof.r}")
    return float(_abs_pow(prof.d1, e.p - 2) * ((e.p - 1) * prof.d2 + (e.n - 1) / prof.r * prof.d1))


def power_radial_residual(params: PowerRadialParams, r, e: Exponents):
    """Delta_p(s c r^g) + lam (p-1)|D(s c r^g)|^p in closed form (s = sign).

    Equals (p-1) c^(p-1) |g|^p r^(p(g-1)) { c lam + s(-Lambda / (g r^g)) }.
    """
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("radius must be positive")
    p, g, c = e.p, params.gamma, params.c
    Lam = power_lambda(g, e)
    logr = np.log(r)
    front = (p - 1) * c ** (p - 1) * abs(g) ** p * np.exp(p * (g - 1) * logr)
    out = front * (c * params.lam + params.sign * (-Lam / (g * np.exp(g * logr))))
    return float(out) if out.ndim == 0 else out


def power_profile(params: PowerRadialParams, r: float) -> RadialProfile:
    """Radial derivatives of ``sign * c * r**gamma``."""
    s, c, g = params.sign, params.c, params.gamma
    rg = np.exp(g * np.log(r))
    return RadialProfile(s * c * rg, s * c * g * rg / r, s * c * g * (g - 1) * rg / r**2, r)


def radial_jet(d1, d2, x, center):
    """Gradient and Hessian of f(|x - center|) given f'(r), f''(r).

    Batched over leading axes of ``x``; ``d1``/``d2`` broadcast against them.
    """
    x = np.asarray(x, dtype=float)
    d = x - np.asarray(center, dtype=float)
    r = np.sqrt(np.einsum("...i,...i->...", d, d))
    if np.any(r == 0):
        raise DomainError("radial jet undefined at the center")
    u = d / r[..., None]
    d1 = np.asarray(d1, dtype=float)[..., None]
    d2 = np.asarray(d2, dtype=float)[..., None, None]
    n = x.shape[-1]
    uu = u[..., :, None] * u[..., None, :]
    q = d1 * u
    X = d2 * uu + (d1[..., None] / r[..., None, None]) * (np.eye(n) - uu)
    X = 0.5 * (X + np.swapaxes(X, -1, -2))
    return q, X

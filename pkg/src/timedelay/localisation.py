"""Radial localisation functions and their derived averages.

A profile ``f`` equals 1 on the ball of radius ``a``, vanishes outside the
ball of radius ``b`` and interpolates with a C-infinity step built from
``exp(-1/u)``.  Three derived functions are provided:

* ``R_f(x) = int_0^inf (f(mu x) - chi_[0,1](mu)) dmu / mu`` (renormalised
  logarithmic average), with gradient ``R_f'(x) = int_0^inf f'(mu x) dmu``;
* ``F_f(x) = int_R f(mu x) dmu`` (velocity weight).

For radial profiles ``R_f(x) = R_f(x/|x|) - ln|x|``, ``R_f'(x) = -x/|x|^2`` and
``F_f(x) = F_f(x/|x|)/|x|``.  The quadrature paths below do not use these
identities, so the identities can be used as tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConstraintError, DomainError
from .quadrature import batch_integrate

__all__ = [
    "LocalisationProfile",
    "make_profile",
    "smooth_step",
    "eval_f",
    "eval_Rf",
    "eval_grad_Rf",
    "eval_Ff",
]


def smooth_step(u):
    """C-infinity step: 0 for ``u <= 0``, 1 for ``u >= 1``.

    Uses ``e^{-1/u} / (e^{-1/u} + e^{-1/(1-u)})`` written as a logistic
    function so that no overflow occurs near the endpoints.
    """
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 1.0, 1.0, 0.0)
    inner = (u > 0.0) & (u < 1.0)
    ui = u[inner]
    out[inner] = expit(1.0 / (1.0 - ui) - 1.0 / ui)
    return out


def smooth_step_derivative(u):
    """Derivative of :func:`smooth_step`."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inner = (u > 0.0) & (u < 1.0)
    ui = u[inner]
    z = 1.0 / (1.0 - ui) - 1.0 / ui
    s = expit(z) * expit(-z)
    with np.errstate(over="ignore", invalid="ignore"):
        dz = 1.0 / (1.0 - ui) ** 2 + 1.0 / ui ** 2
        d = s * dz
    out[inner] = np.where(s > 0.0, d, 0.0)
    return out


@dataclass(frozen=True)
class LocalisationProfile:
    """Radial bump ``f(x) = h(|x|)`` with plateau ``a`` and support ``b``.

    Attributes
    ----------
    plateau_radius : float
        ``f = 1`` for ``|x| <= a``.
    support_radius : float
        ``f = 0`` for ``|x| >= b``.
    dimension : int
        Dimension ``d`` of the configuration space of the position-like
        observable.
    quadrature_tol : float
        Default absolute tolerance for the derived integrals.
    """

    plateau_radius: float
    support_radius: float
    dimension: int = 1
    quadrature_tol: float = 1e-10

    @property
    def transition(self) -> str:
        return "exp(-1/u) smooth step"

    def radial(self, s):
        """Radial profile ``h(s)``."""
        a, b = self.plateau_radius, self.support_radius
        return 1.0 - smooth_step((np.asarray(s, float) - a) / (b - a))

    def radial_derivative(self, s):
        """``h'(s)``."""
        a, b = self.plateau_radius, self.support_radius
        return -smooth_step_derivative((np.asarray(s, float) - a) / (b - a)) / (b - a)

    def to_dict(self) -> dict:
        return {"plateau": self.plateau_radius, "support": self.support_radius,
                "dimension": self.dimension, "quadrature_tol": self.quadrature_tol}


def make_profile(plateau_radius: float, support_radius: float,
                 dimension: int = 1, quadrature_tol: float = 1e-10) -> LocalisationProfile:
    """Build a validated localisation profile."""
    a, b = float(plateau_radius), float(support_radius)
    if not (np.isfinite(a) and np.isfinite(b)) or a <= 0.0 or b <= 0.0:
        raise ConstraintError(f"radii must be positive and finite (a={a}, b={b})")
    if a >= b:
        raise ConstraintError(
            f"plateau radius must be smaller than support radius (a={a} >= b={b})")
    if int(dimension) != dimension or dimension < 1:
        raise ConstraintError(f"dimension must be a positive integer, got {dimension}")
    if not quadrature_tol > 0.0:
        raise ConstraintError("quadrature_tol must be positive")
    return LocalisationProfile(a, b, int(dimension), float(quadrature_tol))


def _as_points(p: LocalisationProfile, x):
    """Return (points of shape (m, d), batch shape)."""
    x = np.asarray(x, dtype=float)
    if p.dimension == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        batch = x.shape
        return x.reshape(-1, 1), batch
    if x.shape[-1] != p.dimension:
        raise DomainError(f"expected points of dimension {p.dimension}, got shape {x.shape}")
    return x.reshape(-1, p.dimension), x.shape[:-1]


def _norms(p, x, what):
    pts, batch = _as_points(p, x)
    rho = np.linalg.norm(pts, axis=1)
    if np.any(rho == 0.0):
        raise DomainError(f"{what} is undefined at the origin")
    return pts, rho, batch


def eval_f(p: LocalisationProfile, x):
    """Evaluate ``f(x)``; scalar in, scalar out."""
    pts, batch = _as_points(p, x)
    out = p.radial(np.linalg.norm(pts, axis=1)).reshape(batch)
    return out[()] if out.ndim == 0 else out


def eval_Rf(p: LocalisationProfile, x, quadrature_tol: float | None = None):
    """Renormalised logarithmic average ``R_f(x)``.

    With ``alpha = a/|x|`` and ``beta = b/|x|`` the integrand is zero where
    both ``f(mu x)`` and ``chi(mu)`` equal 1 or both vanish, equals
    ``1/mu`` on ``(1, alpha)`` and ``-1/mu`` on ``(beta, 1)``.  Those pieces
    are integrated exactly; only the transition ``[alpha, beta]`` (split
    at ``mu = 1``) is done numerically.
    """
    tol = p.quadrature_tol if quadrature_tol is None else quadrature_tol
    _, rho, batch = _norms(p, x, "R_f")
    alpha = p.plateau_radius / rho
    beta = p.support_radius / rho
    exact = np.where(alpha > 1.0, np.log(alpha), 0.0) + np.where(beta < 1.0, np.log(beta), 0.0)

    def inner(mu, rows):
        return (p.radial(mu * rho[rows, None]) - 1.0) / mu

    def outer(mu, rows):
        return p.radial(mu * rho[rows, None]) / mu

    # transition part with mu < 1 (chi = 1) and mu > 1 (chi = 0)
    lo1, hi1 = alpha, np.minimum(beta, 1.0)
    lo2, hi2 = np.maximum(alpha, 1.0), beta
    part1, _ = batch_integrate(inner, lo1, np.maximum(hi1, lo1), tol=tol / 2)
    part2, _ = batch_integrate(outer, np.minimum(lo2, hi2), hi2, tol=tol / 2)
    out = (exact + part1 + part2).reshape(batch)
    return out[()] if out.ndim == 0 else out


def eval_grad_Rf(p: LocalisationProfile, x, method: str = "closed",
                 quadrature_tol: float | None = None):
    """Gradient of ``R_f``.

    ``method="closed"`` returns ``-x/|x|^2`` (valid for radial f).
    ``method="quadrature"`` integrates ``f'(mu x)`` along the ray, where
    ``f'(y) = h'(|y|) y/|y|``.
    """
    pts, rho, batch = _norms(p, x, "R_f'")
    if method == "closed":
        g = -pts / rho[:, None] ** 2
    elif method == "quadrature":
        tol = p.quadrature_tol if quadrature_tol is None else quadrature_tol
        alpha = p.plateau_radius / rho
        beta = p.support_radius / rho

        def integrand(mu, rows):
            return p.radial_derivative(mu * rho[rows, None])

        radial, _ = batch_integrate(integrand, alpha, beta, tol=tol)
        g = radial[:, None] * pts / rho[:, None]
    else:
        raise ValueError(f"unknown method {method!r}")
    if p.dimension == 1:
        out = g[:, 0].reshape(batch)
        return out[()] if out.ndim == 0 else out
    return g.reshape(batch + (p.dimension,))


def eval_Ff(p: LocalisationProfile, x, quadrature_tol: float | None = None):
    """Velocity weight ``F_f(x) = int_R f(mu x) dmu``."""
    tol = p.quadrature_tol if quadrature_tol is None else quadrature_tol
    _, rho, batch = _norms(p, x, "F_f")
    alpha = p.plateau_radius / rho
    beta = p.support_radius / rho

    def integrand(mu, rows):
        return p.radial(mu * rho[rows, None])

    # tolerance relative to the interval length, i.e. to the size of F_f
    trans, _ = batch_integrate(integrand, alpha, beta, tol=tol * (beta - alpha))
    out = (2.0 * (alpha + trans)).reshape(batch)
    return out[()] if out.ndim == 0 else out

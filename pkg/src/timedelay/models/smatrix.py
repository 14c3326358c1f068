"""Stationary scattering matrices.

Schrodinger models: the fundamental matrix ``Y`` of
``(psi, psi')' = [[0, I], [2 M (V + E - lambda), 0]] (psi, psi')`` across
the potential support is converted to plane-wave amplitudes,
``T = W(x_b)^{-1} Y W(x_a)``, with flux-normalised columns
``W(x) = [[e^{ikx}/sqrt(v), e^{-ikx}/sqrt(v)], [ik e^{ikx}/sqrt(v), -ik e^{-ikx}/sqrt(v)]]``.
Eliminating the outgoing amplitudes gives ``S`` in the fiber convention
of :mod:`timedelay.spectral`.

Friedrichs-Lee: ``S(lambda) = d(lambda - i0) / d(lambda + i0)`` with
``d(lambda + i0) = lambda - e0 - g^2 Delta(lambda) + i pi g^2 |v(lambda)|^2``
and the principal value ``Delta(lambda) = PV int |v(x)|^2 / (lambda - x) dx``.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.optimize import least_squares

from ..errors import ConvergenceError, PacketValidityError
from ..quadrature import batch_integrate
from .potentials import SquareBarrier


def _plane_wave_matrix(k, v, x):
    """``W(x)`` of shape ``(M, 2n, 2n)`` for channel momenta/velocities ``(M, n)``."""
    M, n = k.shape
    ep = np.exp(1j * k * x) / np.sqrt(v)
    em = np.exp(-1j * k * x) / np.sqrt(v)
    W = np.zeros((M, 2 * n, 2 * n), complex)
    idx = np.arange(n)
    W[:, idx, idx] = ep
    W[:, idx, idx + n] = em
    W[:, idx + n, idx] = 1j * k * ep
    W[:, idx + n, idx + n] = -1j * k * em
    return W


def transfer_to_smatrix(Y, k, v, xa, xb):
    """Scattering matrices from fundamental matrices ``Y`` propagating ``x_a -> x_b``."""
    n = k.shape[1]
    T = np.linalg.solve(_plane_wave_matrix(k, v, xb), Y @ _plane_wave_matrix(k, v, xa))
    T11, T12 = T[:, :n, :n], T[:, :n, n:]
    T21, T22 = T[:, n:, :n], T[:, n:, n:]
    T22inv = np.linalg.inv(T22)
    S = np.empty_like(T)
    S[:, :n, :n] = T11 - T12 @ T22inv @ T21
    S[:, :n, n:] = T12 @ T22inv
    S[:, n:, :n] = -T22inv @ T21
    S[:, n:, n:] = T22inv
    return S


def _open_channels(model, lam):
    k = model.momentum(lam)
    if np.any(~np.isfinite(k)) or np.any(k <= 0):
        bad = np.asarray(lam)[np.any(~np.isfinite(k) | (k <= 0), axis=1)]
        raise PacketValidityError(
            f"{bad.size} energies have closed channels (e.g. lambda={bad[0]:g}); "
            "evanescent channels are not supported")
    return k, k / np.asarray(model.masses)


def _generator(model, lam, Vmat):
    """``2 M (V + E - lambda)`` for all energies, shape ``(M, n, n)``."""
    n = model.n_channels
    m = np.asarray(model.masses)
    e = np.asarray(model.thresholds)
    Q = Vmat[None, :, :] + np.diag(e)[None] - lam[:, None, None] * np.eye(n)[None]
    return 2.0 * m[None, :, None] * Q


def transfer_expm(model, lam):
    """Fundamental matrix for piecewise-constant potentials (exact matrix exponentials)."""
    n = model.n_channels
    Y = np.broadcast_to(np.eye(2 * n), (lam.size, 2 * n, 2 * n)).copy()
    for x0, x1, V in model.potential.pieces():
        A = np.zeros((lam.size, 2 * n, 2 * n))
        A[:, :n, n:] = np.eye(n)
        A[:, n:, :n] = _generator(model, lam, V)
        Y = expm(A * (x1 - x0)) @ Y
    return Y


def transfer_ode(model, lam, rtol: float = 1e-13, atol: float = 1e-14):
    """Fundamental matrix by adaptive integration, all energies in one system.

    The interval is split at the potential's breakpoints.
    """
    n = model.n_channels
    pot = model.potential
    xa, xb = pot.support
    knots = sorted({xa, xb, *[b for b in pot.breakpoints if xa < b < xb]})
    M = lam.size
    m = np.asarray(model.masses)
    e = np.asarray(model.thresholds)
    shift = (e[None, :, None] * np.eye(n)[None] - lam[:, None, None] * np.eye(n)[None])

    piece = [0.0, 0.0]

    def rhs(x, y):
        Y = y.reshape(M, 2 * n, 2 * n)
        # sample strictly inside the current piece so jumps are never straddled
        lo, hi = piece
        d = 1e-6 * (hi - lo)
        V = pot.values(np.array([min(max(x, lo + d), hi - d)]))[0]
        Q = 2.0 * m[None, :, None] * (V[None] + shift)
        out = np.empty_like(Y)
        out[:, :n] = Y[:, n:]
        out[:, n:] = Q @ Y[:, :n]
        return out.ravel()

    Y = np.broadcast_to(np.eye(2 * n), (M, 2 * n, 2 * n)).copy()
    for x0, x1 in zip(knots[:-1], knots[1:]):
        piece[:] = [x0, x1]
        sol = solve_ivp(rhs, (x0, x1), Y.ravel(), method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise ConvergenceError(f"transfer ODE failed: {sol.message}")
        Y = sol.y[:, -1].reshape(M, 2 * n, 2 * n)
    return Y


def square_barrier_closed_form(model, lam):
    """Closed-form ``[[t, r'], [r, t']]`` for a single-channel square barrier."""
    pot = model.potential
    if model.n_channels != 1 or not isinstance(pot, SquareBarrier):
        raise TypeError("closed form requires a single-channel square barrier")
    mass = model.masses[0]
    lam = np.asarray(lam, float)
    k = np.sqrt(2 * mass * (lam - model.thresholds[0]))
    q = np.sqrt((2 * mass * (lam - model.thresholds[0] - pot.height)).astype(complex))
    L, x0 = pot.width, pot.start
    qL = q * L
    sinc = np.where(np.abs(q) > 1e-12, np.sin(qL) / np.where(q == 0, 1, q), L)
    den = np.cos(qL) - 1j * (k ** 2 + q ** 2) / (2 * k) * sinc
    t = np.exp(-1j * k * L) / den
    r = 1j * (q ** 2 - k ** 2) / (2 * k) * sinc / den
    S = np.empty((lam.size, 2, 2), complex)
    S[:, 0, 0] = t
    S[:, 1, 1] = t
    S[:, 1, 0] = r * np.exp(2j * k * x0)
    S[:, 0, 1] = r * np.exp(-2j * k * (L + x0))
    return S


def schrodinger_smatrix(model, lam, method: str = "auto") -> np.ndarray:
    """Fiber scattering matrices, shape ``(M, 2n, 2n)``.

    ``method``: ``"auto"``, ``"closed"``, ``"expm"`` or ``"ode"``.
    """
    lam = np.atleast_1d(np.asarray(lam, float))
    k, v = _open_channels(model, lam)
    n = model.n_channels
    pot = model.potential
    if pot.is_zero:
        return np.broadcast_to(np.eye(2 * n, dtype=complex), (lam.size, 2 * n, 2 * n)).copy()
    if method == "auto":
        if isinstance(pot, SquareBarrier) and n == 1:
            method = "closed"
        elif pot.pieces() is not None:
            method = "expm"
        else:
            method = "ode"
    if method == "closed":
        return square_barrier_closed_form(model, lam)
    if method == "expm":
        if pot.pieces() is None:
            raise ValueError("expm transfer requires a piecewise-constant potential")
        Y = transfer_expm(model, lam)
    elif method == "ode":
        Y = transfer_ode(model, lam)
    else:
        raise ValueError(f"unknown method {method!r}")
    xa, xb = pot.support
    return transfer_to_smatrix(Y.astype(complex), k, v, xa, xb)


# ---- Friedrichs-Lee ---------------------------------------------------------

def level_shift(model, lam, tol: float = 1e-13) -> np.ndarray:
    """``PV int |v(x)|^2 / (lambda - x) dx`` by symmetric pairing ``x = lambda -+ u``."""
    lam = np.atleast_1d(np.asarray(lam, float))
    w2 = lambda x: model.coupling_profile(x) ** 2

    def integrand(u, rows):
        c = lam[rows, None]
        return (w2(c - u) - w2(c + u)) / u

    # beyond |lambda| + 9 s both terms are below e^-81
    upper = np.abs(lam) + 9.0 * model.coupling_width
    # split [0, upper] so each panel set sees the profile scale
    edges = np.linspace(0.0, 1.0, 9)
    total = np.zeros(lam.size)
    for a, b in zip(edges[:-1], edges[1:]):
        part, _ = batch_integrate(integrand, a * upper, b * upper, tol=tol)
        total += part
    return total


def friedrichs_denominator(model, lam) -> np.ndarray:
    """``d(lambda + i0)``."""
    lam = np.atleast_1d(np.asarray(lam, float))
    g2 = model.coupling ** 2
    return (lam - model.level - g2 * level_shift(model, lam)
            + 1j * np.pi * g2 * model.coupling_profile(lam) ** 2)


def friedrichs_smatrix(model, lam) -> np.ndarray:
    """Scalar ``S(lambda) = d(lambda - i0)/d(lambda + i0)`` as ``(M, 1, 1)`` fibers."""
    lam = np.atleast_1d(np.asarray(lam, float))
    if model.coupling == 0.0:
        return np.ones((lam.size, 1, 1), complex)
    d = friedrichs_denominator(model, lam)
    return (np.conj(d) / d)[:, None, None]


def breit_wigner_fit(lam, phase, window: float = 6.0) -> dict:
    """Fit ``theta = c0 + c1 (lambda - lambda_r) + 2 arctan((lambda - lambda_r)/gamma)``.

    Parameters
    ----------
    lam, phase : array_like
        Energies and the unwrapped scattering phase on a fine grid.
    window : float
        Only points within ``window * gamma0`` of the initial guess are used.

    Returns
    -------
    dict
        ``position``, ``half_width`` (gamma, the distance of the pole from
        the real axis), ``fwhm`` (2 gamma), ``peak_delay`` (2/gamma),
        ``background_slope`` and ``rms_residual``.
    """
    lam = np.asarray(lam, float)
    phase = np.asarray(phase, float)
    deriv = np.gradient(phase, lam)
    i0 = int(np.argmax(deriv))
    lr0, g0 = lam[i0], 2.0 / deriv[i0]
    sel = np.abs(lam - lr0) <= window * g0
    x, y = lam[sel], phase[sel]

    def resid(p):
        c0, c1, lr, g = p
        return c0 + c1 * (x - lr) + 2.0 * np.arctan((x - lr) / g) - y

    c0 = phase[i0]
    fit = least_squares(resid, [c0, 0.0, lr0, g0], x_scale=[1.0, 1.0, g0, g0])
    c0, c1, lr, g = fit.x
    g = abs(g)
    return {"position": float(lr), "half_width": float(g), "fwhm": float(2 * g),
            "peak_delay": float(2.0 / g), "background_slope": float(c1),
            "rms_residual": float(np.sqrt(np.mean(fit.fun ** 2)))}

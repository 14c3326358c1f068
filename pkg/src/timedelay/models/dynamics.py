"""Model-independent operations: propagation, Moller states, S extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from ..errors import ConvergenceError, GridSizingError, PreparationError
from ..localisation import LocalisationProfile, eval_f
from ..spectral import FiberSMatrix, SpectralPacket
from .friedrichs import FriedrichsModel
from .grid import GridState
from .smatrix import friedrichs_smatrix, schrodinger_smatrix

EDGE_TOL = 1e-10          # wraparound guard: probability near the box edge
ENTRY_TOL = 1e-8          # prepared state must start outside the interaction region
EXIT_TOL = 1e-6           # state must have left the interaction region
DOUBLING_TOL = 1e-4       # Moller-limit doubling test


def critical_values(model, lam_grid, threshold: float = 1e-6) -> set:
    """Grid energies where some open channel speed vanishes.

    A point is flagged if ``|v| < threshold`` there, or if the signed squared
    speed of a channel changes sign between it and a neighbour (the zero
    then lies within one grid step; the point closer to it is returned).
    """
    lam = np.asarray(lam_grid, float)
    q = model.velocity_squared(lam)                 # (M, n) signed v^2
    crit = np.any(np.abs(q) < threshold ** 2, axis=1)
    flip = np.sign(q[:-1]) * np.sign(q[1:]) < 0     # (M-1, n)
    for i, j in zip(*np.nonzero(flip)):
        crit[i if abs(q[i, j]) <= abs(q[i + 1, j]) else i + 1] = True
    return {float(x) for x in lam[crit]}


def stationary_smatrix(model, lam_grid, method: str = "auto", check: bool = True) -> FiberSMatrix:
    """Fiber scattering matrices on ``lam_grid``."""
    lam = np.atleast_1d(np.asarray(lam_grid, float))
    s = FiberSMatrix(lam, scatter_function(model, method)(lam))
    if check:
        s.check_unitarity()
    return s


def scatter_function(model, method: str = "auto"):
    """``lam -> S(lam)`` fibers, for exact evaluation at arbitrary energies."""
    if isinstance(model, FriedrichsModel):
        return lambda lam: friedrichs_smatrix(model, lam)
    return lambda lam: schrodinger_smatrix(model, lam, method)


def _guard_edges(model, s: GridState, what: str, tol: float = EDGE_TOL):
    edge = model.edge_probability(s)
    if edge > tol:
        raise GridSizingError(
            f"{what}: probability {edge:.2e} within 2% of the grid edge "
            f"(wraparound guard {tol:g}); enlarge the grid")


def free_evolve(model, phi: SpectralPacket, t: float, scatter=None, guard: bool = True) -> GridState:
    """``e^{-itH0} phi`` (or ``e^{-itH0} S phi`` if ``scatter`` is given) on the grid."""
    native = model.native_amplitudes(phi, scatter)
    if t != 0.0:
        native = native * np.exp(-1j * t * model.native_energies())
    s = model.state_from_native(native, t)
    if guard:
        _guard_edges(model, s, f"free evolution to t={t:g}")
    return s


def full_evolve(model, s: GridState, duration: float, dt: float, substeps: int = 1,
                guard: bool = True, edge_tol: float = EDGE_TOL) -> GridState:
    """Propagate ``s`` with the full Hamiltonian for ``duration``.

    Schrodinger models take ``ceil(|duration|/dt)`` equal Strang steps;
    the Friedrichs-Lee model is evolved exactly.  With ``guard`` the result
    must carry less than ``edge_tol`` probability next to the box edge.
    """
    if duration == 0.0:
        return s.copy()
    if isinstance(model, FriedrichsModel):
        prop = model.propagator(duration)
        c = prop.step(model.to_vector(s))
        out = model.from_vector(c, s.time_stamp + duration)
    else:
        n = max(1, int(np.ceil(abs(duration) / dt - 1e-9)))
        prop = model.propagator(duration / n, substeps)
        psi = s.channels
        for _ in range(n):
            psi = prop.step(psi)
        out = GridState(psi, s.dx, s.time_stamp + duration)
    if guard:
        _guard_edges(model, out, "full evolution", edge_tol)
    return out


def _prepare(model, phi, T_prep, dt, substeps, edge_tol=EDGE_TOL):
    start = free_evolve(model, phi, -T_prep)
    inside = model.interaction_probability(start)
    if inside > ENTRY_TOL:
        raise PreparationError(
            f"free packet at t=-{T_prep:g} still has probability {inside:.2e} in the "
            f"interaction region (needs < {ENTRY_TOL:g}); increase T_prep")
    if isinstance(model, FriedrichsModel):
        start.discrete = 0.0
    return full_evolve(model, start, T_prep, dt, substeps, edge_tol=edge_tol)


def prepare_minus_state(model, phi: SpectralPacket, T_prep: float, dt: float,
                        substeps: int = 1, check: bool = True) -> GridState:
    """Numerical ``W_- phi``: free flight to ``-T_prep``, full evolution back to 0.

    With ``check`` the construction is repeated from ``-2 T_prep``; the
    norm of the difference is stored in ``state.meta["doubling_residual"]``
    and must stay below 1e-4.
    """
    if model.is_free:
        out = free_evolve(model, phi, 0.0)
        out.meta["doubling_residual"] = 0.0
        return out
    out = _prepare(model, phi, T_prep, dt, substeps)
    if check:
        twice = _prepare(model, phi, 2 * T_prep, dt, substeps)
        res = _difference_norm(out, twice)
        out.meta["doubling_residual"] = res
        if res > DOUBLING_TOL:
            raise PreparationError(
                f"Moller limit not converged: doubling T_prep changes W_-phi by {res:.2e}")
    return out


def _difference_norm(a: GridState, b: GridState, continuum_only: bool = False) -> float:
    d2 = np.sum(np.abs(a.channels - b.channels) ** 2) * a.dx
    if not continuum_only and a.discrete is not None and b.discrete is not None:
        d2 += abs(a.discrete - b.discrete) ** 2
    return float(np.sqrt(d2))


def outgoing_native(model, s: GridState, t: float) -> np.ndarray:
    """Free data at time 0 of the continuum part of ``s`` (taken at time ``t``)."""
    native = model.native_from_state(s)
    return native * np.exp(1j * t * model.native_energies())


def extract_S_timedomain(model, phi: SpectralPacket, T_post: float, T_prep: float | None = None,
                         dt: float = 0.05, substeps: int = 1,
                         edge_tol: float = EDGE_TOL) -> SpectralPacket:
    """Time-domain ``S phi``: evolve ``W_- phi`` to ``T_post`` and free-evolve back.

    ``edge_tol`` bounds the probability next to the box edge after the full
    evolution.  Discontinuous potentials scatter a little probability into
    very high momenta that reaches the edge long before the packet does;
    such runs may need a looser bound.
    """
    if model.is_free:
        return phi
    T_prep = T_post if T_prep is None else T_prep
    s0 = _prepare(model, phi, T_prep, dt, substeps, edge_tol)
    s1 = full_evolve(model, s0, T_post, dt, substeps, edge_tol=edge_tol)
    left = model.interaction_probability(s1)
    if left > EXIT_TOL:
        raise ConvergenceError(
            f"state has not left the interaction region at T_post={T_post:g} "
            f"(residual probability {left:.2e} > {EXIT_TOL:g})")
    native = outgoing_native(model, s1, T_post)
    amps = model.native_to_packet_amplitudes(native, phi.energy_grid)
    return phi.with_amplitudes(amps, label="S_timedomain")


@dataclass
class DecayRecord:
    """Samples of ``g_-`` (negative times) and ``g_+`` (positive times) with fits.

    ``power_*`` are log-log slopes and ``rate_*`` exponential rates fitted on
    the later half of each side; ``tail_*`` are trapezoid sums of ``g`` over
    that half.  ``integrable`` means both slopes are below -1; ``tail_ok``
    means both tail sums are below ``tol``.
    """

    times_minus: np.ndarray
    g_minus: np.ndarray
    times_plus: np.ndarray
    g_plus: np.ndarray
    power_minus: float
    power_plus: float
    rate_minus: float
    rate_plus: float
    tail_minus: float
    tail_plus: float
    tol: float
    tail_ok: bool
    integrable: bool
    meta: dict = field(default_factory=dict)


def _fit_decay(t, g, floor=1e-13):
    """Power-law exponent and exponential rate fitted on the later half of the samples."""
    t, g = np.abs(np.asarray(t, float)), np.asarray(g, float)
    order = np.argsort(t)
    t, g = t[order], g[order]
    sel = (t >= np.median(t)) & (g > floor)
    if sel.sum() < 3:
        return -np.inf, np.inf
    power = np.polyfit(np.log(t[sel]), np.log(g[sel]), 1)[0]
    rate = -np.polyfit(t[sel], np.log(g[sel]), 1)[0]
    return float(power), float(rate)


def _tail_sum(t, g):
    t, g = np.abs(np.asarray(t, float)), np.asarray(g, float)
    if t.size < 2:
        return 0.0
    order = np.argsort(t)
    t, g = t[order], g[order]
    half = t >= np.median(t)
    return float(trapezoid(g[half], t[half])) if half.sum() > 1 else 0.0


def asymptotic_coupling_check(model, phi: SpectralPacket, times, dt: float = 0.05,
                              substeps: int = 1, outgoing: str = "timedomain",
                              tol: float = 1e-3) -> DecayRecord:
    """Sample ``||L e^{-itH} W_- phi - e^{-itH0} phi||`` for ``t < 0`` and the analogue
    with ``S phi`` for ``t > 0``.

    The incoming state is prepared from ``-2 max|t|`` so that the sampled
    negative times are genuinely after the preparation.  ``outgoing`` selects
    the reference ``S phi``: ``"timedomain"`` (free data extracted at
    ``2 max t`` from the same dynamics) or ``"stationary"`` (exact fibers at
    the grid energies).  The stationary reference adds the time-stepping
    error of the full dynamics as a constant floor to ``g_+``.
    """
    times = np.sort(np.asarray(times, float))
    tneg, tpos = times[times < 0], times[times > 0]
    span = max(np.max(np.abs(times)), dt)
    T0 = 2.0 * span
    start = free_evolve(model, phi, -T0)
    if isinstance(model, FriedrichsModel):
        start.discrete = 0.0
    out_native = None
    if outgoing == "stationary":
        out_native = model.native_amplitudes(phi, scatter_function(model))
    elif outgoing != "timedomain":
        raise ValueError(f"unknown outgoing reference {outgoing!r}")

    samples = {}
    s, t_now = start, -T0
    for t in times:
        s = full_evolve(model, s, t - t_now, dt, substeps)
        t_now = t
        samples[t] = s
    if outgoing == "timedomain":
        end = full_evolve(model, s, 2 * span - t_now, dt, substeps)
        out_native = outgoing_native(model, end, 2 * span)

    in_native = model.native_amplitudes(phi)
    E = model.native_energies()

    def gap(t, native):
        ref = model.state_from_native(native * np.exp(-1j * t * E), t)
        return _difference_norm(samples[t], ref, continuum_only=True)

    gm = np.array([gap(t, in_native) for t in tneg])
    gp = np.array([gap(t, out_native) for t in tpos])
    pm, rm = _fit_decay(tneg, gm) if tneg.size else (-np.inf, np.inf)
    pp, rp = _fit_decay(tpos, gp) if tpos.size else (-np.inf, np.inf)
    tail_m, tail_p = _tail_sum(tneg, gm), _tail_sum(tpos, gp)
    tail_ok = bool(tail_m < tol and tail_p < tol)
    integrable = bool(pm < -1.0 and pp < -1.0)
    return DecayRecord(tneg, gm, tpos, gp, pm, pp, rm, rp, tail_m, tail_p, tol, tail_ok, integrable,
                       {"outgoing": outgoing, "prepared_from": -T0})


def localisation_weights(model, p: LocalisationProfile, radii) -> np.ndarray:
    """Rows ``f(Phi/r) * dPhi`` on the grid's ``Phi`` coordinates, one per radius."""
    radii = np.atleast_1d(np.asarray(radii, float))
    ext = model.phi_extent()
    for r in radii:
        if not r > 0:
            raise ValueError("r must be positive")
        if p.support_radius * r >= ext:
            raise GridSizingError(
                f"localisation region b*r = {p.support_radius * r:g} exceeds the grid extent {ext:g}")
    coords = model.phi_coordinates()
    return np.array([eval_f(p, coords / r) for r in radii]) * model.phi_measure()


def localisation_expectation(model, s: GridState, p: LocalisationProfile, r: float) -> float:
    """``<s, f(Phi/r) s>`` on the continuum component."""
    w = localisation_weights(model, p, [r])[0]
    return float(w @ model.phi_density(s))

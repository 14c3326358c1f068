"""Sojourn times and time delays as truncated time integrals.

All streams of a computation share one time grid ``t_n = n dt`` with
``|n| <= ceil(T_max / dt)`` and one trapezoid rule, so differences of
quantities that each grow like ``r`` are formed on the integrand.

The full dynamics is only run inside the interaction window
``[-T_prep, T_post]``.  Before it the full state coincides with the free
evolution of ``phi`` (that is how ``W_- phi`` is prepared), after it with
the free evolution of the outgoing data read off at ``T_post``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConstraintError, ConvergenceError, GridSizingError, PreparationError
from .localisation import LocalisationProfile
from .models.dynamics import (ENTRY_TOL, EXIT_TOL, localisation_weights,
                              outgoing_native, prepare_minus_state)
from .models.friedrichs import FriedrichsModel
from .quadrature import trapezoid_weights
from .spectral import FiberSMatrix, SpectralPacket, apply_S

__all__ = [
    "TimeIntegrationPolicy",
    "SojournLedger",
    "SojournValue",
    "StreamSet",
    "sojourn_streams",
    "ledgers_from_streams",
    "required_extent",
    "sojourn_free",
    "sojourn_full",
    "tau_sym",
    "tau_in",
    "tau_free_reference",
    "theorem34_integral",
    "sojourn_difference",
]

TAIL_FRACTION = 0.1
RESEED = 64          # recompute free phases exactly every RESEED steps
EDGE_FRACTION = 0.02


@dataclass(frozen=True)
class TimeIntegrationPolicy:
    """Time grid and truncation rule.

    The integrals run over ``[-T_max(r), T_max(r)]`` with
    ``T_max(r) = max(t_prep, t_post) + t_max_factor * r / v_min``.

    Attributes
    ----------
    dt : float
        Propagation step and trapezoid step.
    t_max_factor : float
        Ballistic exit factor ``C``.
    tail_tol : float
        Bound on the integrand over the last 10% of the window.
    t_prep, t_post : float
        Interaction window for the full dynamics (``t_post`` defaults to ``t_prep``).
    substeps : int
        Split-step substeps per ``dt`` (Schrodinger models).
    check_preparation : bool
        Run the Moller doubling test before the sojourn loop.
    """

    dt: float = 0.05
    t_max_factor: float = 4.0
    tail_tol: float = 1e-6
    t_prep: float = 30.0
    t_post: float | None = None
    substeps: int = 1
    check_preparation: bool = True

    def __post_init__(self):
        if self.t_post is None:
            object.__setattr__(self, "t_post", self.t_prep)
        for name in ("dt", "t_max_factor", "tail_tol"):
            if not getattr(self, name) > 0:
                raise ConstraintError(f"{name} must be positive")
        if self.t_prep < 0 or self.t_post < 0:
            raise ConstraintError("t_prep and t_post must be non-negative")
        if self.substeps < 1 or int(self.substeps) != self.substeps:
            raise ConstraintError("substeps must be a positive integer")

    @property
    def window(self) -> float:
        return max(self.t_prep, self.t_post)

    def t_max(self, r, v_min: float):
        return self.window + self.t_max_factor * np.asarray(r, float) / v_min

    def to_dict(self) -> dict:
        return asdict(self)


class SojournValue(float):
    """A float carrying the tail diagnostic of the integral that produced it."""

    converged: bool
    tail: float

    def __new__(cls, value, converged=True, tail=0.0):
        obj = super().__new__(cls, value)
        obj.converged = bool(converged)
        obj.tail = float(tail)
        return obj


@dataclass
class SojournLedger:
    """All sojourn quantities at one dilation ``r``.

    ``tau_sym``, ``tau_in``, ``tau_free_ref``, ``theorem34`` and
    ``sojourn_diff`` are accumulated on the integrand; the totals
    ``T_r0_phi``, ``T_r0_Sphi`` and ``T_r1`` are accumulated separately.
    """

    r: float
    T_r0_phi: float
    T_r0_Sphi: float
    T_r1: float
    T_2: float
    tau_sym: float
    tau_in: float
    tau_free_ref: float
    theorem34: float = float("nan")
    sojourn_diff: float = float("nan")
    t_max: float = float("nan")
    tails: dict = field(default_factory=dict)
    tail_flags: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(self.tail_flags.values())

    def identity_residuals(self) -> dict:
        """Integrand-level delays minus their totals-level reconstruction."""
        total = self.T_r1 + self.T_2
        return {"tau_sym": self.tau_sym - (total - 0.5 * (self.T_r0_phi + self.T_r0_Sphi)),
                "tau_in": self.tau_in - (total - self.T_r0_phi)}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SojournLedger":
        return cls(**d)

    CSV_COLUMNS = ("r", "T_r0_phi", "T_r0_Sphi", "T_r1", "T_2", "tau_sym", "tau_in",
                   "tau_free_ref", "theorem34", "sojourn_diff", "t_max")

    def csv_row(self) -> dict:
        row = {c: getattr(self, c) for c in self.CSV_COLUMNS}
        for k, v in self.tail_flags.items():
            row[f"tail_ok_{k}"] = int(v)
        return row


@dataclass
class StreamSet:
    """Expectation streams ``<f(Phi/r)>`` on the shared time grid.

    Arrays have shape ``(n_radii, 2 n_max + 1)``; column ``n_max`` is ``t = 0``.
    """

    dt: float
    radii: np.ndarray
    t_max: np.ndarray
    n_max: int
    free_phi: np.ndarray
    free_out: np.ndarray | None
    free_sphi: np.ndarray | None
    full: np.ndarray | None
    occupation: np.ndarray | None      # (2 n_max + 1,), complement weight
    tail_tol: float
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(-self.n_max, self.n_max + 1)


def _v_min_max(model, phi: SpectralPacket):
    v = np.abs(model.velocity_map(phi.energy_grid))
    v = v[np.isfinite(v)]
    return float(v.min()), float(v.max())


def required_extent(model, phi: SpectralPacket, p: LocalisationProfile, radii,
                    pol: TimeIntegrationPolicy) -> float:
    """Smallest ``Phi`` half-extent that holds the longest free flight.

    ``v_max T_max(r_max) + b r_max`` plus ten packet widths, where the
    packet width in ``Phi`` is ``v_max / width`` (``width`` the energy
    spread of the packet, taken as an eighth of its support).
    """
    v_min, v_max = _v_min_max(model, phi)
    r_max = float(np.max(radii))
    lo, hi = phi.envelope_support
    width = (hi - lo) / 8.0
    return float(v_max * pol.t_max(r_max, v_min) + p.support_radius * r_max
                 + 10.0 * v_max / width)


def _check_extent(model, phi, p, radii, pol):
    need = required_extent(model, phi, p, radii, pol)
    if model.phi_extent() < need:
        raise GridSizingError(
            f"grid half-extent {model.phi_extent():g} is below the required {need:.1f} "
            f"(v_max*T_max + b*r_max + 10 packet widths); enlarge the grid")


def _sphi_native(model, phi, s):
    if isinstance(s, FiberSMatrix):
        return model.native_amplitudes(apply_S(s, phi))
    return model.native_amplitudes(phi, s)


def _density(model, native):
    """Channel-summed ``Phi``-density of native amplitudes ``(..., n, N)``."""
    return np.sum(np.abs(model.to_phi_rep(native)) ** 2, axis=-2)


def _free_streams(model, sources, W, n_max, dt):
    """Free streams for stacked native data ``(n_src, n, N)`` at ``t = -n_max dt ... n_max dt``."""
    E = model.native_energies()
    n_src = sources.shape[0]
    out = np.empty((n_src, W.shape[0], 2 * n_max + 1))
    out[:, :, n_max] = _density(model, sources) @ W.T
    step = {+1: np.exp(-1j * dt * E), -1: np.exp(1j * dt * E)}
    edge = np.abs(model.phi_coordinates()) >= (1.0 - EDGE_FRACTION) * model.phi_extent()
    edge_prob = 0.0
    for sign in (+1, -1):
        cur = sources
        for n in range(1, n_max + 1):
            if n % RESEED == 0:
                cur = sources * np.exp(-1j * (sign * n * dt) * E)
            else:
                cur = cur * step[sign]
            dens = _density(model, cur)
            out[:, :, n_max + sign * n] = dens @ W.T
        edge_prob = max(edge_prob, float(np.max(dens[:, edge].sum(axis=-1)) * model.phi_measure()))
    return out, edge_prob


def _full_window_schrodinger(model, start_native, W, n_prep, n_post, pol):
    prop = model.propagator(pol.dt, pol.substeps)
    psi = model.grid.to_position(start_native)
    vals = np.empty((W.shape[0], n_prep + n_post + 1))
    norms = [float(np.sqrt(np.sum(np.abs(psi) ** 2) * model.grid.dx))]
    vals[:, 0] = W @ np.sum(np.abs(psi) ** 2, axis=0)
    for n in range(1, n_prep + n_post + 1):
        psi = prop.step(psi)
        vals[:, n] = W @ np.sum(np.abs(psi) ** 2, axis=0)
    norms.append(float(np.sqrt(np.sum(np.abs(psi) ** 2) * model.grid.dx)))
    end = model.state_from_native(model.grid.to_momentum(psi), n_post * pol.dt)
    return vals, None, end, norms


def _full_window_friedrichs(model, start_native, W, n_prep, n_post, pol):
    grid = model.grid
    c0 = np.concatenate([start_native[0] * np.sqrt(grid.dx), [0.0]])
    prop = model.propagator(pol.dt)
    n_tot = n_prep + n_post
    vals = np.empty((W.shape[0], n_tot + 1))
    occ = np.empty(n_tot + 1)
    last = None
    for idx, c in prop.blocks(c0, n_tot):
        cont = c[:, :-1] / np.sqrt(grid.dx)
        vals[:, idx] = (np.abs(grid.to_momentum(cont)) ** 2 @ W.T).T
        occ[idx] = np.abs(c[:, -1]) ** 2
        last = c[-1]
    norms = [float(np.linalg.norm(c0)), float(np.linalg.norm(last))]
    end = model.from_vector(last, n_post * pol.dt)
    return vals, occ, end, norms


def sojourn_streams(model, phi: SpectralPacket, p: LocalisationProfile, radii,
                    pol: TimeIntegrationPolicy, full: bool = True, s=None) -> StreamSet:
    """Compute every expectation stream needed for the ledgers at ``radii``.

    Parameters
    ----------
    full : bool
        Also run the full dynamics (needed for ``T_r1``, ``T_2`` and the delays).
    s : FiberSMatrix or callable, optional
        Scattering data for the stationary ``S phi`` stream.  A
        :class:`FiberSMatrix` on the packet grid is applied and the result
        interpolated onto the grid; a callable ``lam -> S(lam)`` is evaluated
        exactly at every grid energy.
    """
    radii = np.atleast_1d(np.asarray(radii, float))
    v_min, _ = _v_min_max(model, phi)
    _check_extent(model, phi, p, radii, pol)
    W = localisation_weights(model, p, radii)
    t_max = pol.t_max(radii, v_min)
    n_max = int(np.ceil(np.max(t_max) / pol.dt - 1e-9))
    meta = {"v_min": v_min}

    phi_native = model.native_amplitudes(phi)
    sources = [phi_native]
    sphi_native = None
    if s is not None:
        sphi_native = _sphi_native(model, phi, s)
        sources.append(sphi_native)

    full_vals = occ_window = None
    n_prep = int(np.ceil(pol.t_prep / pol.dt - 1e-9))
    n_post = int(np.ceil(pol.t_post / pol.dt - 1e-9))
    out_native = None
    if full and not model.is_free:
        if n_prep + n_post == 0:
            raise ConstraintError("full dynamics needs t_prep + t_post > 0")
        if pol.check_preparation:
            prep = prepare_minus_state(model, phi, n_prep * pol.dt, pol.dt, pol.substeps)
            meta["doubling_residual"] = prep.meta["doubling_residual"]
        E = model.native_energies()
        start_native = phi_native * np.exp(1j * (n_prep * pol.dt) * E)
        start = model.state_from_native(start_native, -n_prep * pol.dt)
        entry = model.interaction_probability(start)
        if entry > ENTRY_TOL:
            raise PreparationError(
                f"packet at t=-{n_prep * pol.dt:g} has probability {entry:.2e} in the interaction "
                f"region (needs < {ENTRY_TOL:g}); increase t_prep")
        runner = (_full_window_friedrichs if isinstance(model, FriedrichsModel)
                  else _full_window_schrodinger)
        full_vals, occ_window, end, norms = runner(model, start_native, W, n_prep, n_post, pol)
        left = model.interaction_probability(end)
        if left > EXIT_TOL:
            raise ConvergenceError(
                f"state still has probability {left:.2e} in the interaction region at "
                f"t_post={n_post * pol.dt:g} (needs < {EXIT_TOL:g}); increase t_post")
        span = (n_prep + n_post) * pol.dt
        meta.update(entry_probability=entry, exit_probability=left,
                    norm_drift_per_time=abs(norms[1] - norms[0]) / span)
        out_native = outgoing_native(model, end, n_post * pol.dt)
        sources.append(out_native)

    if n_max < max(n_prep, n_post):
        raise ConstraintError("T_max is shorter than the interaction window")
    vals, edge_prob = _free_streams(model, np.array(sources), W, n_max, pol.dt)
    if edge_prob > 1e-10:
        raise GridSizingError(
            f"free flight reaches the grid edge (probability {edge_prob:.2e}); enlarge the grid")
    meta["edge_probability"] = edge_prob
    free_phi = vals[0]
    free_sphi = vals[1] if sphi_native is not None else None

    full_stream = occupation = free_out = None
    if full:
        if model.is_free:
            free_out = free_phi
            full_stream = free_phi.copy()
            occupation = np.zeros(2 * n_max + 1)
        else:
            free_out = vals[-1]
            full_stream = free_phi.copy()
            full_stream[:, n_max + n_post:] = free_out[:, n_max + n_post:]
            full_stream[:, n_max - n_prep:n_max + n_post + 1] = full_vals
            occupation = np.zeros(2 * n_max + 1)
            if occ_window is not None:
                occupation[n_max - n_prep:n_max + n_post + 1] = occ_window
    return StreamSet(pol.dt, radii, t_max, n_max, free_phi, free_out, free_sphi,
                     full_stream, occupation, pol.tail_tol, meta)


def _tail(stream, n_max, n_r):
    k = max(1, int(np.ceil(TAIL_FRACTION * n_r)))
    lo = stream[n_max - n_r:n_max - n_r + k]
    hi = stream[n_max + n_r - k + 1:n_max + n_r + 1]
    return float(max(np.max(np.abs(lo)), np.max(np.abs(hi))))


def ledgers_from_streams(st: StreamSet) -> list[SojournLedger]:
    """One ledger per radius; quantities without their streams are NaN."""
    nan = float("nan")
    dt, n_max = st.dt, st.n_max
    T_2 = nan
    if st.occupation is not None:
        T_2 = float(trapezoid_weights(2 * n_max + 1, dt) @ st.occupation)
    out = []
    for i, r in enumerate(st.radii):
        n_r = min(n_max, int(np.ceil(st.t_max[i] / dt - 1e-9)))
        sl = slice(n_max - n_r, n_max + n_r + 1)
        w = trapezoid_weights(2 * n_r + 1, dt)
        wh = trapezoid_weights(n_r + 1, dt)
        fwd = slice(n_max, n_max + n_r + 1)
        bwd = slice(n_max, n_max - n_r - 1 if n_max - n_r - 1 >= 0 else None, -1)

        g_phi = st.free_phi[i]
        tails = {"T_r0_phi": _tail(g_phi, n_max, n_r)}
        T0_phi = float(w @ g_phi[sl])
        theorem34 = float(0.5 * wh @ (g_phi[bwd] - g_phi[fwd]))

        T0_S = T1 = tsym = tin = tfree = sdiff = nan
        if st.full is not None:
            g_out, g_full = st.free_out[i], st.full[i]
            tails["T_r0_Sphi"] = _tail(g_out, n_max, n_r)
            tails["T_r1"] = _tail(g_full, n_max, n_r)
            tails["T_2"] = _tail(st.occupation, n_max, n_r)
            T0_S = float(w @ g_out[sl])
            T1 = float(w @ g_full[sl])
            tsym = float(w @ (g_full[sl] - 0.5 * (g_phi[sl] + g_out[sl]))) + T_2
            tin = float(w @ (g_full[sl] - g_phi[sl])) + T_2
        if st.free_sphi is not None:
            g_s = st.free_sphi[i]
            tails["T_r0_Sphi_stationary"] = _tail(g_s, n_max, n_r)
            if st.full is None:
                T0_S = float(w @ g_s[sl])
            tfree = float(0.5 * wh @ ((g_s[fwd] - g_s[bwd]) - (g_phi[fwd] - g_phi[bwd])))
            sdiff = float(w @ (g_s[sl] - g_phi[sl]))
        flags = {k: v < st.tail_tol for k, v in tails.items()}
        out.append(SojournLedger(float(r), T0_phi, T0_S, T1, T_2, tsym, tin, tfree,
                                 theorem34, sdiff, n_r * dt, tails, flags))
    return out


# ---- single-radius operations ------------------------------------------------

def _one(model, phi, p, r, pol, full, s=None):
    return ledgers_from_streams(sojourn_streams(model, phi, p, [r], pol, full, s))[0]


def _value(x, ledger, keys):
    tail = max(ledger.tails[k] for k in keys)
    return SojournValue(x, all(ledger.tail_flags[k] for k in keys), tail)


def sojourn_free(model, phi: SpectralPacket, p: LocalisationProfile, r: float,
                 pol: TimeIntegrationPolicy) -> SojournValue:
    """``T_r^0(phi)``: time spent by the free evolution of ``phi`` in ``f(Phi/r)``."""
    led = _one(model, phi, p, r, pol, full=False)
    return _value(led.T_r0_phi, led, ["T_r0_phi"])


def sojourn_full(model, phi: SpectralPacket, p: LocalisationProfile, r: float,
                 pol: TimeIntegrationPolicy) -> tuple[SojournValue, SojournValue]:
    """``(T_r1, T_2)`` for the full evolution of ``W_- phi``."""
    led = _one(model, phi, p, r, pol, full=True)
    return _value(led.T_r1, led, ["T_r1"]), _value(led.T_2, led, ["T_2"])


def tau_sym(model, phi: SpectralPacket, s, p: LocalisationProfile, r: float,
            pol: TimeIntegrationPolicy) -> SojournLedger:
    """Full ledger at ``r``; ``s`` supplies the stationary ``S phi`` stream."""
    return _one(model, phi, p, r, pol, full=True, s=s)


def tau_in(ledger: SojournLedger) -> float:
    """Usual delay ``(T_r1 + T_2) - T_r0(phi)`` from the stored totals."""
    return (ledger.T_r1 + ledger.T_2) - ledger.T_r0_phi


def tau_free_reference(model, phi: SpectralPacket, s, p: LocalisationProfile, r: float,
                       pol: TimeIntegrationPolicy) -> SojournValue:
    """Free-evolution expression of the delay built from ``phi`` and ``S phi`` at ``+-t``."""
    led = _one(model, phi, p, r, pol, full=False, s=s)
    return _value(led.tau_free_ref, led, ["T_r0_phi", "T_r0_Sphi_stationary"])


def theorem34_integral(model, phi: SpectralPacket, p: LocalisationProfile, r: float,
                       pol: TimeIntegrationPolicy) -> SojournValue:
    """``1/2 int_0^T <phi, (e^{-itH0} f e^{itH0} - e^{itH0} f e^{-itH0}) phi> dt``."""
    led = _one(model, phi, p, r, pol, full=False)
    return _value(led.theorem34, led, ["T_r0_phi"])


def sojourn_difference(model, phi: SpectralPacket, s, p: LocalisationProfile, r: float,
                       pol: TimeIntegrationPolicy) -> SojournValue:
    """``T_r^0(S phi) - T_r^0(phi)`` accumulated on the integrand."""
    led = _one(model, phi, p, r, pol, full=False, s=s)
    return _value(led.sojourn_diff, led, ["T_r0_phi", "T_r0_Sphi_stationary"])

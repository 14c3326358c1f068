"""Multichannel one-dimensional Schrodinger scattering.

``H0 = diag(P^2 / (2 m_j) + e_j)`` acting on ``L^2(R)^n``, ``H = H0 + V``
with a real symmetric, compactly supported channel matrix ``V(x)`` and
``Phi = Q``.  A single channel with ``m = 1/2`` and ``e = 0`` gives
``H0 = P^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConstraintError, GridSizingError, PacketValidityError
from .grid import Grid, GridState
from .potentials import NoPotential, Potential

EXIT_MARGIN = 5.0     # distance added around the potential support
K_RESOLUTION = 0.8    # highest packet momentum as a fraction of the Nyquist wavenumber


@dataclass(frozen=True)
class SchrodingerModel:
    """Schrodinger-type scattering system.

    Attributes
    ----------
    grid : Grid
        Position grid for time-domain work.
    potential : Potential
        Interaction; its channel count must match ``masses``.
    masses, thresholds : tuple of float
        Channel masses ``m_j`` and thresholds ``e_j``.
    variant : str
        ``"A"`` (single channel) or ``"B"`` (coupled channels).
    """

    grid: Grid
    potential: Potential = field(default_factory=NoPotential)
    masses: tuple = (0.5,)
    thresholds: tuple = (0.0,)
    variant: str = "A"

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        object.__setattr__(self, "thresholds", tuple(float(e) for e in self.thresholds))
        if len(self.masses) != len(self.thresholds):
            raise ConstraintError("masses and thresholds must have equal length")
        if any(m <= 0 for m in self.masses):
            raise ConstraintError("masses must be positive")
        if self.potential.n_channels != len(self.masses):
            raise ConstraintError(
                f"potential acts on {self.potential.n_channels} channels, model has {len(self.masses)}")

    # ---- spectral data -------------------------------------------------
    @property
    def n_channels(self) -> int:
        return len(self.masses)

    @property
    def fiber_dim(self) -> int:
        return 2 * self.n_channels

    @property
    def kappa(self) -> frozenset:
        return frozenset(self.thresholds)

    @property
    def has_complement(self) -> bool:
        return False

    @property
    def is_free(self) -> bool:
        return self.potential.is_zero

    def fiber_labels(self) -> list[str]:
        n = self.n_channels
        return [f"ch{j + 1}{s}" for s in "+-" for j in range(n)]

    def momentum(self, lam) -> np.ndarray:
        """Channel momenta ``k_j = sqrt(2 m_j (lambda - e_j))``, shape ``(M, n)``; NaN if closed."""
        lam = np.atleast_1d(np.asarray(lam, float))
        m = np.asarray(self.masses)
        e = np.asarray(self.thresholds)
        arg = 2.0 * m * (lam[:, None] - e)
        with np.errstate(invalid="ignore"):
            return np.where(arg >= 0, np.sqrt(np.abs(arg)), np.nan)

    def velocity_squared(self, lam) -> np.ndarray:
        """Signed squared channel speed ``2 (lambda - e_j) / m_j``; negative when closed."""
        lam = np.atleast_1d(np.asarray(lam, float))
        return 2.0 * (lam[:, None] - np.asarray(self.thresholds)) / np.asarray(self.masses)

    def velocity_map(self, lam) -> np.ndarray:
        """``H0'`` per fiber: ``+-k_j / m_j``, shape ``(M, 2n)``."""
        v = self.momentum(lam) / np.asarray(self.masses)
        return np.concatenate([v, -v], axis=1)

    def hessian_map(self) -> np.ndarray:
        """``H0''`` per fiber (``1/m_j``)."""
        h = 1.0 / np.asarray(self.masses)
        return np.concatenate([h, h])

    def check_packet_support(self, lo: float, hi: float) -> None:
        top = max(self.thresholds)
        if lo <= top:
            raise PacketValidityError(
                f"packet support [{lo:g}, {hi:g}] reaches below the highest threshold {top:g}; "
                "closed channels are not supported")
        k_top = float(np.max(self.momentum(hi)))
        if k_top > K_RESOLUTION * self.grid.k_max:
            raise PacketValidityError(
                f"packet momentum up to {k_top:.3g} exceeds {K_RESOLUTION:g} of the grid's "
                f"Nyquist wavenumber {self.grid.k_max:.3g}; use more grid points")

    # ---- momentum (H0-diagonal) representation ------------------------------
    def native_energies(self) -> np.ndarray:
        """``k^2/(2 m_j) + e_j`` on the momentum grid, shape ``(n, N)``."""
        k = self.grid.k
        return np.array([k ** 2 / (2 * m) + e for m, e in zip(self.masses, self.thresholds)])

    def native_velocity(self) -> np.ndarray:
        return np.array([self.grid.k / m for m in self.masses])

    def native_measure(self) -> float:
        return self.grid.dk

    def native_amplitudes(self, phi, scatter=None) -> np.ndarray:
        """Momentum amplitudes of ``phi`` (or of ``S phi`` if ``scatter`` is given).

        ``scatter(lam)`` must return fiber matrices of shape ``(M, 2n, 2n)``.
        Amplitudes are read off the packet spline at the exact energy of each
        momentum node.
        """
        n = self.n_channels
        k = self.grid.k
        lo, hi = phi.energy_grid[0], phi.energy_grid[-1]
        E = self.native_energies()
        sel = []     # (channel, fiber row, indices)
        for j in range(n):
            for sgn, row in ((1, j), (-1, j + n)):
                idx = np.flatnonzero((sgn * k > 0) & (E[j] >= lo) & (E[j] <= hi))
                sel.append((j, row, idx))
        lam_all = np.concatenate([E[j, idx] for j, _, idx in sel])
        lam_u, inv = np.unique(lam_all, return_inverse=True)
        amp_u = phi.amplitude_at(lam_u)
        S_u = scatter(lam_u) if scatter is not None else None
        out = np.zeros((n, self.grid.points), complex)
        start = 0
        for j, row, idx in sel:
            u = inv[start:start + idx.size]
            start += idx.size
            if S_u is None:
                vals = amp_u[u, row]
            else:
                vals = np.einsum("mj,mj->m", S_u[u, row, :], amp_u[u])
            out[j, idx] = vals * np.sqrt(np.abs(k[idx]) / self.masses[j])
        return out

    def native_to_packet_amplitudes(self, native: np.ndarray, energy_grid) -> np.ndarray:
        """Spectral amplitudes ``(M, 2n)`` from momentum amplitudes.

        The momentum function is evaluated exactly at ``+-k_j(lambda)`` by a
        direct Fourier sum of the position-space state.
        """
        n = self.n_channels
        kk = self.momentum(energy_grid)
        psi = self.grid.to_position(native)
        out = np.zeros((len(energy_grid), 2 * n), complex)
        for j in range(n):
            ok = np.isfinite(kk[:, j]) & (kk[:, j] > 0)
            kj = kk[ok, j]
            both = self.grid.momentum_at(psi[j], np.concatenate([kj, -kj]))
            w = 1.0 / np.sqrt(kj / self.masses[j])
            out[ok, j] = both[:kj.size] * w
            out[ok, j + n] = both[kj.size:] * w
        return out

    # ---- Phi (position) representation ---------------------------------
    def to_phi_rep(self, native: np.ndarray) -> np.ndarray:
        return self.grid.to_position(native)

    def from_phi_rep(self, psi: np.ndarray) -> np.ndarray:
        return self.grid.to_momentum(psi)

    def phi_coordinates(self) -> np.ndarray:
        return self.grid.x

    def phi_measure(self) -> float:
        return self.grid.dx

    def phi_extent(self) -> float:
        return self.grid.extent

    def velocity_rep(self, phi) -> dict:
        """Packet data in the representation where ``H0'`` is diagonal."""
        return {"amplitudes": self.native_amplitudes(phi), "velocity": self.native_velocity(),
                "hessian": (1.0 / np.asarray(self.masses))[:, None], "measure": self.native_measure()}

    def state_from_native(self, native: np.ndarray, t: float) -> GridState:
        return GridState(self.grid.to_position(native), self.grid.dx, t)

    def native_from_state(self, s: GridState) -> np.ndarray:
        return self.grid.to_momentum(s.channels)

    def phi_density(self, s: GridState) -> np.ndarray:
        """Channel-summed density on the ``Phi`` grid."""
        return np.sum(np.abs(s.channels) ** 2, axis=0)

    # ---- interaction region ---------------------------------------------
    def interaction_region(self) -> tuple[float, float]:
        if self.potential.is_zero:
            return (0.0, 0.0)
        lo, hi = self.potential.support
        return (lo - EXIT_MARGIN, hi + EXIT_MARGIN)

    def interaction_probability(self, s: GridState) -> float:
        if self.potential.is_zero:
            return 0.0
        lo, hi = self.interaction_region()
        mask = (self.grid.x >= lo) & (self.grid.x <= hi)
        return float(np.sum(self.phi_density(s)[mask]) * self.grid.dx)

    def edge_probability(self, s: GridState, fraction: float = 0.02) -> float:
        """Probability within ``fraction`` of the box at either end."""
        x = self.grid.x
        edge = np.abs(x) >= (1.0 - fraction) * self.grid.extent
        return float(np.sum(self.phi_density(s)[edge]) * self.grid.dx)

    # ---- full propagation ---------------------------------------------------
    def propagator(self, dt: float, substeps: int = 1) -> "SplitStepPropagator":
        return SplitStepPropagator(self, dt, substeps)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "masses": list(self.masses),
                "thresholds": list(self.thresholds), "potential": self.potential.to_dict(),
                "grid": {"points": self.grid.points, "extent": self.grid.extent}}


def _potential_exponential(V: np.ndarray, tau: float) -> np.ndarray:
    """``exp(-i V tau)`` for real symmetric ``V`` of shape ``(N, n, n)``."""
    n = V.shape[-1]
    if n == 1:
        return np.exp(-1j * tau * V[:, 0, 0])[:, None, None]
    if n == 2:
        # V = a I + b sigma_x + c sigma_z
        a = 0.5 * (V[:, 0, 0] + V[:, 1, 1])
        c = 0.5 * (V[:, 0, 0] - V[:, 1, 1])
        b = V[:, 0, 1]
        w = np.hypot(b, c)
        cw, sw = np.cos(w * tau), np.sin(w * tau)
        safe = np.where(w > 0, w, 1.0)
        sb, sc = np.where(w > 0, sw * b / safe, 0.0), np.where(w > 0, sw * c / safe, 0.0)
        ph = np.exp(-1j * a * tau)
        U = np.empty(V.shape, complex)
        U[:, 0, 0] = ph * (cw - 1j * sc)
        U[:, 1, 1] = ph * (cw + 1j * sc)
        U[:, 0, 1] = U[:, 1, 0] = ph * (-1j * sb)
        return U
    w, Q = np.linalg.eigh(V)
    return (Q * np.exp(-1j * tau * w)[:, None, :]) @ np.swapaxes(Q, 1, 2)


class SplitStepPropagator:
    """Strang splitting ``e^{-iV h/2} e^{-iH0 h} e^{-iV h/2}`` repeated ``substeps`` times per ``dt``.

    Consecutive potential half-steps are merged.  States enter and leave in
    position representation, shape ``(n, N)``.
    """

    def __init__(self, model: SchrodingerModel, dt: float, substeps: int = 1):
        if substeps < 1 or int(substeps) != substeps:
            raise ConstraintError("substeps must be a positive integer")
        self.model = model
        self.dt = float(dt)
        self.substeps = int(substeps)
        h = self.dt / self.substeps
        grid = model.grid
        vmax = model.potential.max_abs(grid.x)
        if abs(h) * vmax >= 0.1:
            raise ConstraintError(
                f"split-step stability guard: h*max|V| = {abs(h) * vmax:.3g} >= 0.1 "
                f"(h = dt/substeps = {h:g})")
        self.kinetic = np.exp(-1j * h * model.native_energies())
        V = model.potential.values(grid.x)
        self.free = model.potential.is_zero
        mask = np.any(V != 0.0, axis=(1, 2))
        self.active = np.flatnonzero(mask)
        Va = V[self.active]
        self.half = _potential_exponential(Va, 0.5 * h)
        self.full = _potential_exponential(Va, h)

    def _potential(self, psi, U):
        if self.free:
            return psi
        idx = self.active
        if U.shape[1] == 1:
            psi[:, idx] *= U[:, 0, 0]
        else:
            psi[:, idx] = np.einsum("mij,jm->im", U, psi[:, idx])
        return psi

    def step(self, psi: np.ndarray) -> np.ndarray:
        """Advance a position-space state by ``dt``."""
        grid = self.model.grid
        psi = self._potential(np.array(psi, complex), self.half)
        for s in range(self.substeps):
            psi = grid.to_position(grid.to_momentum(psi) * self.kinetic)
            psi = self._potential(psi, self.half if s == self.substeps - 1 else self.full)
        return psi

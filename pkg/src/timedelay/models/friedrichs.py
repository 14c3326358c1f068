"""Friedrichs-Lee model: a discrete level coupled to a continuum.

Free space ``L^2(R)`` with ``H0`` = multiplication by ``x`` and ``Phi = P``
(so ``H0' = -1``, ``H0'' = 0``); full space ``L^2(R) + C`` with

    H = [[x, g v], [g <v|, e0]],   v(x) = exp(-x^2 / (2 s^2)).

``J`` is the inclusion of the continuum; ``1 - J J*`` projects onto the
level.  The continuum is discretised on the grid ``x_j`` with orthonormal
basis vectors of weight ``sqrt(dx)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from ..errors import ConstraintError, PacketValidityError
from .grid import Grid, GridState

COUPLING_TAIL = 1e-8


@dataclass(frozen=True)
class FriedrichsModel:
    """Level ``e0`` coupled with strength ``g`` through a Gaussian profile of width ``s``."""

    grid: Grid
    level: float = 0.0
    coupling: float = 0.1
    coupling_width: float = 0.5
    variant: str = "C"

    def __post_init__(self):
        if not self.coupling_width > 0:
            raise ConstraintError("coupling width must be positive")
        if not -self.grid.extent < self.level < self.grid.extent:
            raise ConstraintError("level must lie inside the energy band of the grid")

    @property
    def n_channels(self) -> int:
        return 1

    @property
    def fiber_dim(self) -> int:
        return 1

    @property
    def kappa(self) -> frozenset:
        return frozenset()

    @property
    def has_complement(self) -> bool:
        return True

    @property
    def is_free(self) -> bool:
        return self.coupling == 0.0

    def fiber_labels(self) -> list[str]:
        return ["x"]

    def coupling_profile(self, x) -> np.ndarray:
        return np.exp(-0.5 * (np.asarray(x, float) / self.coupling_width) ** 2)

    def velocity_squared(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, float))
        return np.ones((lam.size, 1))

    def velocity_map(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, float))
        return -np.ones((lam.size, 1))

    def hessian_map(self) -> np.ndarray:
        return np.zeros(1)

    def check_packet_support(self, lo: float, hi: float) -> None:
        x = self.grid.x
        if lo <= x[0] + 8 * self.grid.dx or hi >= x[-1] - 8 * self.grid.dx:
            raise PacketValidityError(
                f"packet support [{lo:g}, {hi:g}] leaves the energy band [{x[0]:g}, {x[-1]:g}]")

    # ---- H0-diagonal representation (the x grid) -----------------------
    def native_energies(self) -> np.ndarray:
        return self.grid.x[None, :]

    def native_velocity(self) -> np.ndarray:
        return -np.ones((1, self.grid.points))

    def native_measure(self) -> float:
        return self.grid.dx

    def native_amplitudes(self, phi, scatter=None) -> np.ndarray:
        x = self.grid.x
        amp = phi.amplitude_at(x)[:, 0]
        if scatter is not None:
            inside = np.flatnonzero(amp != 0)
            S = scatter(x[inside])
            amp = amp.copy()
            amp[inside] = S[:, 0, 0] * amp[inside]
        return amp[None, :]

    def native_to_packet_amplitudes(self, native: np.ndarray, energy_grid) -> np.ndarray:
        spline = CubicSpline(self.grid.x, native[0])
        return spline(np.asarray(energy_grid, float))[:, None]

    # ---- Phi (momentum) representation ----------------------------------
    def to_phi_rep(self, native: np.ndarray) -> np.ndarray:
        return self.grid.to_momentum(native)

    def from_phi_rep(self, psi: np.ndarray) -> np.ndarray:
        return self.grid.to_position(psi)

    def phi_coordinates(self) -> np.ndarray:
        return self.grid.k

    def phi_measure(self) -> float:
        return self.grid.dk

    def phi_extent(self) -> float:
        return self.grid.k_max

    def velocity_rep(self, phi) -> dict:
        return {"amplitudes": self.native_amplitudes(phi), "velocity": self.native_velocity(),
                "hessian": np.zeros((1, 1)), "measure": self.native_measure()}

    def state_from_native(self, native: np.ndarray, t: float) -> GridState:
        return GridState(np.array(native, complex), self.grid.dx, t, None)

    def native_from_state(self, s: GridState) -> np.ndarray:
        return s.channels

    def phi_density(self, s: GridState) -> np.ndarray:
        return np.abs(self.grid.to_momentum(s.channels[0])) ** 2

    # ---- interaction region (in momentum) ---------------------------------
    def interaction_radius(self) -> float:
        """Momentum beyond which the Fourier transform of ``v`` is below the tail tolerance."""
        return np.sqrt(2.0 * np.log(1.0 / COUPLING_TAIL)) / self.coupling_width

    def interaction_region(self) -> tuple[float, float]:
        if self.is_free:
            return (0.0, 0.0)
        p = self.interaction_radius()
        return (-p, p)

    def interaction_probability(self, s: GridState) -> float:
        d = 0.0 if s.discrete is None else abs(s.discrete) ** 2
        if self.is_free:
            return d
        mask = np.abs(self.grid.k) <= self.interaction_radius()
        return float(np.sum(self.phi_density(s)[mask]) * self.grid.dk + d)

    def edge_probability(self, s: GridState, fraction: float = 0.02) -> float:
        edge = np.abs(self.grid.k) >= (1.0 - fraction) * self.grid.k_max
        return float(np.sum(self.phi_density(s)[edge]) * self.grid.dk)

    # ---- full propagation ---------------------------------------------------
    def hamiltonian(self) -> np.ndarray:
        """Dense ``(N+1) x (N+1)`` matrix in the orthonormal grid basis."""
        N = self.grid.points
        H = np.zeros((N + 1, N + 1))
        H[np.arange(N), np.arange(N)] = self.grid.x
        H[N, N] = self.level
        c = self.coupling * self.coupling_profile(self.grid.x) * np.sqrt(self.grid.dx)
        H[:N, N] = c
        H[N, :N] = c
        return H

    def eigensystem(self):
        return _eigensystem(self)

    def to_vector(self, s: GridState) -> np.ndarray:
        d = 0.0 if s.discrete is None else s.discrete
        return np.concatenate([s.channels[0] * np.sqrt(self.grid.dx), [d]])

    def from_vector(self, c: np.ndarray, t: float) -> GridState:
        return GridState(c[:-1] / np.sqrt(self.grid.dx), self.grid.dx, t, complex(c[-1]))

    def propagator(self, dt: float, substeps: int = 1) -> "SpectralPropagator":
        return SpectralPropagator(self, dt)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "level": self.level, "coupling": self.coupling,
                "coupling_width": self.coupling_width,
                "grid": {"points": self.grid.points, "extent": self.grid.extent}}


@lru_cache(maxsize=2)
def _eigensystem(model: FriedrichsModel):
    E, U = np.linalg.eigh(model.hamiltonian())
    E.flags.writeable = False
    U.flags.writeable = False
    return E, U


class SpectralPropagator:
    """Exact evolution through the cached eigendecomposition."""

    def __init__(self, model: FriedrichsModel, dt: float):
        self.model = model
        self.dt = float(dt)
        E, self.U = model.eigensystem()
        self.E = E
        self.phase = np.exp(-1j * self.dt * E)

    def step(self, c: np.ndarray) -> np.ndarray:
        """Advance a coefficient vector (orthonormal basis) by ``dt``."""
        return _real_matmul(self.U, self.phase * _real_matmul(self.U.T, c))

    def blocks(self, c0: np.ndarray, n_steps: int, block: int = 256):
        """Yield ``(indices, coefficients)`` for the samples ``0, dt, ..., n_steps dt``.

        Phases are computed directly from the sample times so no error
        accumulates along the trajectory.
        """
        U = self.U
        a = _real_matmul(U.T, c0)
        for s in range(0, n_steps + 1, block):
            n = np.arange(s, min(s + block, n_steps + 1))
            ph = np.exp(-1j * np.outer(n * self.dt, self.E)) * a
            yield n, _real_matmul(ph, U.T)

    def trajectory(self, c0: np.ndarray, n_steps: int, block: int = 256) -> np.ndarray:
        """Coefficient vectors at ``0, dt, ..., n_steps dt``, shape ``(n_steps + 1, N + 1)``."""
        out = np.empty((n_steps + 1, self.U.shape[0]), complex)
        for n, c in self.blocks(c0, n_steps, block):
            out[n] = c
        return out


def _real_matmul(A, B):
    """Product of a real and a complex array without promoting the real one."""
    if np.iscomplexobj(A):
        return (A.real @ B) + 1j * (A.imag @ B)
    return (A @ B.real) + 1j * (A @ B.imag)

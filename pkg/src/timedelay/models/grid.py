"""Uniform periodic grids and grid-represented states."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from ..errors import ConstraintError

_SQRT2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class Grid:
    """``points`` nodes ``x_j = (j - N/2) dx`` on ``[-extent, extent)``."""

    points: int
    extent: float

    def __post_init__(self):
        if self.points < 8 or self.points % 2:
            raise ConstraintError(f"grid needs an even number >= 8 of points, got {self.points}")
        if not self.extent > 0:
            raise ConstraintError("grid extent must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.extent / self.points

    @property
    def dk(self) -> float:
        return np.pi / self.extent

    @property
    def k_max(self) -> float:
        """Nyquist wavenumber."""
        return np.pi / self.dx

    @cached_property
    def x(self) -> np.ndarray:
        return (np.arange(self.points) - self.points // 2) * self.dx

    @cached_property
    def k(self) -> np.ndarray:
        """Wavenumbers in FFT order."""
        return 2.0 * np.pi * sfft.fftfreq(self.points, self.dx)

    @cached_property
    def _phase(self) -> np.ndarray:
        return np.exp(-1j * self.k * self.x[0])

    def to_momentum(self, psi: np.ndarray) -> np.ndarray:
        """Unitary Fourier transform ``(2 pi)^{-1/2} int e^{-ikx} psi(x) dx`` on the last axis."""
        return sfft.fft(psi, axis=-1) * (self._phase * (self.dx / _SQRT2PI))

    def to_position(self, amp: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_momentum`."""
        return sfft.ifft(amp * (np.conj(self._phase) * (_SQRT2PI / self.dx)), axis=-1)

    def momentum_at(self, psi: np.ndarray, k: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Exact trigonometric evaluation of the transform of ``psi`` at arbitrary ``k``.

        Only grid points where ``psi`` is non-negligible enter the sum.
        """
        psi = np.asarray(psi)
        k = np.asarray(k, float)
        mag = np.abs(psi)
        keep = mag > 1e-14 * (mag.max() if mag.size else 0.0)
        xs, vals = self.x[keep], psi[keep]
        out = np.empty(k.shape, complex)
        flat, res = k.ravel(), out.reshape(-1)
        for s in range(0, flat.size, chunk):
            kk = flat[s:s + chunk]
            res[s:s + chunk] = np.exp(-1j * np.outer(kk, xs)) @ vals
        return out * (self.dx / _SQRT2PI)


@dataclass
class GridState:
    """A state on a grid: continuum channels plus an optional discrete amplitude.

    For Schrodinger models ``channels`` holds position-space wavefunctions;
    for the Friedrichs-Lee model it holds the continuum function of the
    energy variable ``x``.
    """

    channels: np.ndarray
    dx: float
    time_stamp: float = 0.0
    discrete: complex | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channels = np.atleast_2d(np.asarray(self.channels, complex))

    def continuum_norm2(self) -> float:
        return float(np.sum(np.abs(self.channels) ** 2) * self.dx)

    def norm(self) -> float:
        d = 0.0 if self.discrete is None else abs(self.discrete) ** 2
        return float(np.sqrt(self.continuum_norm2() + d))

    def copy(self) -> "GridState":
        return GridState(self.channels.copy(), self.dx, self.time_stamp, self.discrete, dict(self.meta))

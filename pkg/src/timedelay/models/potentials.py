"""Interaction terms for the Schrodinger-type models.

A potential returns, for positions ``x``, real symmetric channel matrices
of shape ``(len(x), n, n)``.  ``support`` bounds the region where it is
non-zero (Gaussians are truncated at ``cutoff`` widths).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class Potential:
    n_channels: int = 1

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Points where the potential is discontinuous."""
        return ()

    def pieces(self):
        """``[(x0, x1, matrix)]`` for piecewise-constant potentials, else None."""
        return None

    def values(self, x) -> np.ndarray:
        raise NotImplementedError

    def max_abs(self, x) -> float:
        v = self.values(x)
        return float(np.max(np.abs(np.linalg.eigvalsh(v)))) if v.size else 0.0

    @property
    def is_zero(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NoPotential(Potential):
    n_channels: int = 1

    @property
    def support(self):
        return (0.0, 0.0)

    @property
    def is_zero(self):
        return True

    def values(self, x):
        x = np.asarray(x, float)
        return np.zeros(x.shape + (self.n_channels, self.n_channels))

    def max_abs(self, x):
        return 0.0

    def to_dict(self):
        return {"kind": "none"}


def _edge_weights(x, lo, hi):
    """Indicator of [lo, hi] with weight 1/2 at points lying on an edge."""
    x = np.asarray(x, float)
    tol = 1e-9 * max(1.0, abs(lo), abs(hi))
    w = ((x > lo + tol) & (x < hi - tol)).astype(float)
    w[np.abs(x - lo) <= tol] = 0.5
    w[np.abs(x - hi) <= tol] = 0.5
    return w


@dataclass(frozen=True)
class SquareBarrier(Potential):
    """``V0`` on ``[start, start + width]``."""

    height: float
    width: float
    start: float = 0.0
    n_channels: int = 1

    @property
    def support(self):
        return (self.start, self.start + self.width)

    @property
    def breakpoints(self):
        return self.support

    def pieces(self):
        return [(self.start, self.start + self.width, np.array([[self.height]]))]

    def values(self, x):
        return (self.height * _edge_weights(x, *self.support))[..., None, None]

    def to_dict(self):
        return {"kind": "square", "height": self.height, "width": self.width, "start": self.start}


@dataclass(frozen=True)
class GaussianBarrier(Potential):
    """``V0 exp(-(x - c)^2 / (2 s^2))`` truncated at ``|x - c| <= cutoff s``."""

    height: float
    width: float
    center: float = 0.0
    cutoff: float = 10.0
    n_channels: int = 1

    @property
    def support(self):
        return (self.center - self.cutoff * self.width, self.center + self.cutoff * self.width)

    def values(self, x):
        x = np.asarray(x, float)
        u = (x - self.center) / self.width
        v = np.where(np.abs(u) <= self.cutoff, self.height * np.exp(-0.5 * u ** 2), 0.0)
        return v[..., None, None]

    def to_dict(self):
        return {"kind": "gaussian", "height": self.height, "width": self.width,
                "center": self.center, "cutoff": self.cutoff}


_SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class BoxCoupling(Potential):
    """Off-diagonal coupling ``g`` between two channels on ``[start, start + width]``."""

    strength: float
    width: float
    start: float = 0.0
    n_channels: int = 2

    @property
    def support(self):
        return (self.start, self.start + self.width)

    @property
    def breakpoints(self):
        return self.support

    def pieces(self):
        return [(self.start, self.start + self.width, self.strength * _SIGMA_X)]

    def values(self, x):
        w = self.strength * _edge_weights(x, *self.support)
        return w[..., None, None] * _SIGMA_X

    def to_dict(self):
        return {"kind": "box", "strength": self.strength, "width": self.width, "start": self.start}


@dataclass(frozen=True)
class GaussianCoupling(Potential):
    """Off-diagonal coupling ``g exp(-(x - c)^2 / (2 s^2))`` between two channels."""

    strength: float
    width: float
    center: float = 0.0
    cutoff: float = 10.0
    n_channels: int = 2

    @property
    def support(self):
        return (self.center - self.cutoff * self.width, self.center + self.cutoff * self.width)

    def values(self, x):
        x = np.asarray(x, float)
        u = (x - self.center) / self.width
        w = np.where(np.abs(u) <= self.cutoff, self.strength * np.exp(-0.5 * u ** 2), 0.0)
        return w[..., None, None] * _SIGMA_X

    def to_dict(self):
        return {"kind": "gaussian", "strength": self.strength, "width": self.width,
                "center": self.center, "cutoff": self.cutoff}

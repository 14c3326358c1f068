"""Spectral representation of the free Hamiltonian.

States are stored as fiber amplitudes ``phi(lambda)`` on a uniform energy
grid; the scattering operator as one unitary matrix per grid energy.

Fiber ordering for Schrodinger-type models with ``n`` channels is
``[(1,+), ..., (n,+), (1,-), ..., (n,-)]`` where ``+`` denotes momentum
``+k_j(lambda)`` (right-mover) and ``-`` its mirror image.  Scattering
matrices act on incoming amplitudes ``(a, d)`` (from the left on ``+``
fibers, from the right on ``-`` fibers) and return outgoing amplitudes
``(c, b)`` in the same ordering, i.e. ``S = [[t, r'], [r, t']]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (ConstraintError, ConvergenceError, IncompatibleGridError,
                     PacketValidityError)
from .localisation import LocalisationProfile, eval_Ff, eval_grad_Rf, smooth_step
from .quadrature import trapezoid_weights

__all__ = [
    "SpectralPacket",
    "FiberSMatrix",
    "S_CONVENTION",
    "packet_envelope",
    "make_packet",
    "apply_S",
    "ew_fiber",
    "ew_field",
    "ew_expectation",
    "tf_expectation_spectral",
    "tf_expectation_phase_space",
    "ff_weights",
    "ff_commutator_residual",
    "ff_expectation",
]

S_CONVENTION = ("fibers [(channel j, +k) for j] + [(channel j, -k) for j]; "
                "S maps incoming (a: +k from the left, d: -k from the right) to "
                "outgoing (c: +k to the right, b: -k to the left); S = [[t, r'], [r, t']]; "
                "plane waves referenced to x = 0")

SUPPORT_WIDTHS = 4.0     # envelope support half-width in units of `width`
CUTOFF_START = 3.0       # smooth cutoff begins at 3 widths


def _interleave(a: np.ndarray) -> list[float]:
    a = np.asarray(a, complex).ravel()
    out = np.empty(2 * a.size)
    out[0::2] = a.real
    out[1::2] = a.imag
    return out.tolist()


def _deinterleave(v, shape) -> np.ndarray:
    v = np.asarray(v, float)
    return (v[0::2] + 1j * v[1::2]).reshape(shape)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SpectralPacket:
    """Fiber amplitudes of a state on a uniform energy grid.

    ``amplitudes[i, f]`` is the component along fiber ``f`` at energy
    ``energy_grid[i]``; the norm is ``int dlambda sum_f |phi_f|^2``.
    """

    energy_grid: np.ndarray
    amplitudes: np.ndarray
    envelope_support: tuple[float, float]
    kappa_margin: float
    label: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "energy_grid", _frozen(self.energy_grid, float))
        amps = np.asarray(self.amplitudes, complex)
        if amps.ndim == 1:
            amps = amps[:, None]
        object.__setattr__(self, "amplitudes", _frozen(amps, complex))
        if self.amplitudes.shape[0] != self.energy_grid.size:
            raise IncompatibleGridError("amplitudes do not match the energy grid")
        if np.any(np.diff(self.energy_grid) <= 0):
            raise ConstraintError("energy grid must be strictly increasing")

    @property
    def fiber_dim(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def spacing(self) -> float:
        return float(self.energy_grid[1] - self.energy_grid[0])

    @cached_property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.energy_grid.size, self.spacing)

    def norm(self) -> float:
        return float(np.sqrt(self.weights @ np.sum(np.abs(self.amplitudes) ** 2, axis=1)))

    def inner(self, other: "SpectralPacket") -> complex:
        _check_same_grid(self.energy_grid, other.energy_grid)
        return complex(self.weights @ np.sum(np.conj(self.amplitudes) * other.amplitudes, axis=1))

    @cached_property
    def _spline(self):
        return CubicSpline(self.energy_grid, self.amplitudes, axis=0)

    def amplitude_at(self, lam) -> np.ndarray:
        """Spline interpolation of the amplitudes; zero off the grid."""
        lam = np.asarray(lam, float)
        out = np.zeros(lam.shape + (self.fiber_dim,), complex)
        inside = (lam >= self.energy_grid[0]) & (lam <= self.energy_grid[-1])
        out[inside] = self._spline(lam[inside])
        return out

    def with_amplitudes(self, amplitudes, label: str | None = None) -> "SpectralPacket":
        return SpectralPacket(self.energy_grid, amplitudes, self.envelope_support,
                              self.kappa_margin, self.label if label is None else label)

    def chirped(self, c: float) -> "SpectralPacket":
        """Multiply by ``exp(i c lambda)``, which shifts ``<T>`` by ``-c``."""
        phase = np.exp(1j * c * self.energy_grid)[:, None]
        return self.with_amplitudes(self.amplitudes * phase)

    def to_dict(self) -> dict:
        return {
            "energy_grid": self.energy_grid.tolist(),
            "fiber_dim": self.fiber_dim,
            "amplitudes": _interleave(self.amplitudes),
            "envelope_support": list(self.envelope_support),
            "kappa_margin": self.kappa_margin,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralPacket":
        grid = np.asarray(d["energy_grid"], float)
        amps = _deinterleave(d["amplitudes"], (grid.size, int(d["fiber_dim"])))
        return cls(grid, amps, tuple(d["envelope_support"]), float(d["kappa_margin"]),
                   d.get("label", ""))


@dataclass(frozen=True, eq=False)
class FiberSMatrix:
    """Scattering matrices ``S(lambda)`` on an energy grid, shape ``(M, n, n)``."""

    energy_grid: np.ndarray
    fibers: np.ndarray
    convention: str = S_CONVENTION

    def __post_init__(self):
        object.__setattr__(self, "energy_grid", _frozen(self.energy_grid, float))
        object.__setattr__(self, "fibers", _frozen(self.fibers, complex))
        if self.fibers.shape[0] != self.energy_grid.size or self.fibers.ndim != 3:
            raise IncompatibleGridError("fibers must have shape (M, n, n)")

    @property
    def fiber_dim(self) -> int:
        return self.fibers.shape[1]

    def unitarity_defect(self) -> np.ndarray:
        """``||S* S - I||_2`` per grid point."""
        eye = np.eye(self.fiber_dim)
        prod = np.conj(np.swapaxes(self.fibers, 1, 2)) @ self.fibers - eye
        return np.linalg.norm(prod, ord=2, axis=(1, 2))

    def check_unitarity(self, tol: float = 1e-8) -> None:
        worst = float(np.max(self.unitarity_defect()))
        if worst > tol:
            raise ConvergenceError(f"scattering matrix not unitary: defect {worst:.3e} > {tol:g}")

    def to_dict(self) -> dict:
        return {"energy_grid": self.energy_grid.tolist(), "fiber_dim": self.fiber_dim,
                "fibers": _interleave(self.fibers), "convention": self.convention}

    @classmethod
    def from_dict(cls, d: dict) -> "FiberSMatrix":
        grid = np.asarray(d["energy_grid"], float)
        n = int(d["fiber_dim"])
        return cls(grid, _deinterleave(d["fibers"], (grid.size, n, n)), d.get("convention", S_CONVENTION))


def _check_same_grid(g1, g2):
    if g1.shape != g2.shape or not np.array_equal(g1, g2):
        raise IncompatibleGridError("energy grids differ (no resampling is performed)")


def packet_envelope(lam, center: float, width: float):
    """Gaussian times a C-infinity cutoff supported on ``center +- 4 width``."""
    d = np.abs(np.asarray(lam, float) - center)
    cutoff = 1.0 - smooth_step((d - CUTOFF_START * width) / ((SUPPORT_WIDTHS - CUTOFF_START) * width))
    return np.exp(-0.5 * ((lam - center) / width) ** 2) * cutoff


def make_packet(model, center_energy: float, width: float, fiber_weights,
                chirp: float = 0.0, points: int = 2049) -> SpectralPacket:
    """Normalised packet ``eta(lambda) * w_f`` with optional chirp ``exp(i c lambda)``.

    Raises
    ------
    PacketValidityError
        If the support ``[c - 4w, c + 4w]`` touches a critical value or
        leaves the part of the spectrum the model supports.
    """
    if not width > 0.0:
        raise ConstraintError("packet width must be positive")
    if points < 9:
        raise ConstraintError("packet grid needs at least 9 points")
    weights = np.asarray(fiber_weights, complex).ravel()
    if weights.size != model.fiber_dim:
        raise IncompatibleGridError(
            f"fiber_weights has {weights.size} entries, model fiber dimension is {model.fiber_dim}")
    if not np.any(weights):
        raise ConstraintError("fiber_weights must not all vanish")
    lo = center_energy - SUPPORT_WIDTHS * width
    hi = center_energy + SUPPORT_WIDTHS * width
    margin = kappa_margin((lo, hi), model.kappa)
    if margin <= 0.0:
        raise PacketValidityError(
            f"packet support [{lo:g}, {hi:g}] touches a critical value in {sorted(model.kappa)} "
            f"(kappa margin {margin:g} <= 0)")
    model.check_packet_support(lo, hi)
    grid = np.linspace(lo, hi, points)
    amps = packet_envelope(grid, center_energy, width)[:, None] * weights[None, :]
    if chirp:
        amps = amps * np.exp(1j * chirp * grid)[:, None]
    pk = SpectralPacket(grid, amps, (lo, hi), margin)
    return pk.with_amplitudes(pk.amplitudes / pk.norm())


def kappa_margin(support, kappa) -> float:
    """Signed distance from the interval ``support`` to the set ``kappa``."""
    lo, hi = support
    margin = np.inf
    for c in kappa:
        if lo <= c <= hi:
            return -min(c - lo, hi - c)
        margin = min(margin, lo - c if c < lo else c - hi)
    return float(margin)


def apply_S(s: FiberSMatrix, phi: SpectralPacket) -> SpectralPacket:
    """Fiber-wise product ``S(lambda) phi(lambda)``."""
    _check_same_grid(s.energy_grid, phi.energy_grid)
    if s.fiber_dim != phi.fiber_dim:
        raise IncompatibleGridError(
            f"fiber dimensions differ (S: {s.fiber_dim}, packet: {phi.fiber_dim})")
    out = np.einsum("mij,mj->mi", s.fibers, phi.amplitudes)
    return phi.with_amplitudes(out, label=(phi.label + ":S") if phi.label else "S")


def _grid_index(grid, lam):
    i = int(np.argmin(np.abs(grid - lam)))
    h = grid[1] - grid[0]
    if abs(grid[i] - lam) > 1e-6 * abs(h):
        raise ConstraintError(f"lambda={lam} is not a grid point")
    return i


def ew_fiber(s: FiberSMatrix, lam: float, step: float) -> np.ndarray:
    """``-i S(lambda)* dS/dlambda`` by centred differences plus one Richardson step.

    ``step`` must be a positive integer multiple of the grid spacing and
    ``lambda +- 2 step`` must lie on the grid.
    """
    grid = s.energy_grid
    h = grid[1] - grid[0]
    m = step / h
    if m < 0.5 or abs(m - round(m)) > 1e-6:
        raise ConstraintError(f"step {step:g} is not a multiple of the grid spacing {h:g}")
    m = int(round(m))
    i = _grid_index(grid, lam)
    if i - 2 * m < 0 or i + 2 * m >= grid.size:
        raise ConstraintError(f"step {step:g} too large: lambda +- 2*step leaves the grid")
    F = s.fibers
    d1 = (F[i + m] - F[i - m]) / (2 * m * h)
    d2 = (F[i + 2 * m] - F[i - 2 * m]) / (4 * m * h)
    deriv = (4.0 * d1 - d2) / 3.0
    return -1j * np.conj(F[i]).T @ deriv


def _derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order centred derivative along axis 0 (second order at edges)."""
    d = np.gradient(values, h, axis=0, edge_order=2)
    if values.shape[0] >= 5:
        d[2:-2] = (values[:-4] - 8 * values[1:-3] + 8 * values[3:-1] - values[4:]) / (12 * h)
    return d


def ew_field(s: FiberSMatrix) -> np.ndarray:
    """Eisenbud-Wigner matrices ``-i S* S'`` at every grid energy.

    Only the Hermitian part is kept; for unitary ``S`` the anti-Hermitian
    part is pure differencing error.
    """
    deriv = _derivative(s.fibers, s.energy_grid[1] - s.energy_grid[0])
    A = -1j * np.conj(np.swapaxes(s.fibers, 1, 2)) @ deriv
    return 0.5 * (A + np.conj(np.swapaxes(A, 1, 2)))


def ew_expectation(s: FiberSMatrix, phi: SpectralPacket) -> float:
    """``int dlambda <phi(lambda), -i S* S' phi(lambda)>``."""
    _check_same_grid(s.energy_grid, phi.energy_grid)
    A = ew_field(s)
    integrand = np.einsum("mi,mij,mj->m", np.conj(phi.amplitudes), A, phi.amplitudes)
    val = complex(phi.weights @ integrand)
    if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
        raise ConvergenceError(f"Eisenbud-Wigner expectation not real: Im = {val.imag:.3e}")
    return val.real


def tf_expectation_spectral(phi: SpectralPacket) -> float:
    """``Re int <phi, i dphi/dlambda>`` by fourth-order differences."""
    h = phi.spacing
    a = phi.amplitudes
    d4 = _derivative(a, h)
    d2 = np.gradient(a, h, axis=0, edge_order=2)
    v4 = complex(phi.weights @ np.sum(np.conj(a) * 1j * d4, axis=1))
    v2 = complex(phi.weights @ np.sum(np.conj(a) * 1j * d2, axis=1))
    scale = max(1.0, abs(v4.real))
    if abs(v4 - v2) > 1e-4 * scale:
        raise ConvergenceError(
            f"energy grid too coarse for d/dlambda: 2nd/4th order differ by {abs(v4 - v2):.2e}")
    if abs(v4.imag) > 1e-8 * scale:
        raise ConvergenceError(f"<phi, i dphi/dlambda> not real: Im = {v4.imag:.3e}")
    return v4.real


def tf_expectation_phase_space(phi: SpectralPacket, model, p: LocalisationProfile) -> float:
    """``<phi, T_f phi>`` from the phase-space form of the time operator.

    ``T_f = -1/2 (Phi . R_f'(H0') + R_f'(H0'/|H0'|) . Phi |H0'|^{-1}
    + i R_f'(H0'/|H0'|) . (H0'' H0') |H0'|^{-3})``, evaluated by switching
    between the representation diagonalising ``H0'`` (``model.velocity_rep``)
    and the one diagonalising ``Phi`` (``model.to_phi_rep``).
    """
    rep = model.velocity_rep(phi)
    amp, vel, hess, measure = rep["amplitudes"], rep["velocity"], rep["hessian"], rep["measure"]
    occupied = np.abs(amp) > 0
    if np.any(occupied) and np.min(np.abs(vel[occupied])) <= 0.0:
        raise PacketValidityError("packet overlaps a point of vanishing velocity")
    safe_v = np.where(occupied, vel, 1.0)
    unit = np.sign(safe_v)
    grad_v = np.where(occupied, eval_grad_Rf(p, safe_v), 0.0)      # R_f'(H0')
    grad_u = np.where(occupied, eval_grad_Rf(p, unit), 0.0)        # R_f'(H0'/|H0'|)
    inv_abs = np.where(occupied, 1.0 / np.abs(safe_v), 0.0)

    to_phi = model.to_phi_rep
    coords, dphi = model.phi_coordinates(), model.phi_measure()
    term1 = np.sum(np.conj(to_phi(amp)) * coords * to_phi(grad_v * amp)) * dphi
    term2 = np.sum(np.conj(to_phi(grad_u * amp)) * coords * to_phi(inv_abs * amp)) * dphi
    term3 = 1j * np.sum(np.abs(amp) ** 2 * grad_u * hess * safe_v * inv_abs ** 3) * measure
    val = -0.5 * (term1 + term2 + term3)
    if abs(val.imag) > 1e-6 * max(1.0, abs(val.real)):
        raise ConvergenceError(f"phase-space <T> not real: Im = {val.imag:.3e}")
    return float(val.real)


def ff_weights(p: LocalisationProfile, velocity: np.ndarray) -> np.ndarray:
    """``F_f(v)`` per fiber via ``F_f(v) = F_f(v/|v|)/|v|``."""
    v = np.asarray(velocity, float)
    signs = np.sign(v)
    f_plus, f_minus = eval_Ff(p, np.array([1.0, -1.0]))
    unit = np.where(signs > 0, f_plus, f_minus)
    return unit / np.abs(v)


def ff_commutator_residual(s: FiberSMatrix, phi: SpectralPacket, p: LocalisationProfile,
                           model) -> float:
    """``|| F_f(H0') S phi - S F_f(H0') phi ||``."""
    _check_same_grid(s.energy_grid, phi.energy_grid)
    F = ff_weights(p, model.velocity_map(phi.energy_grid))
    a = phi.amplitudes
    left = F * np.einsum("mij,mj->mi", s.fibers, a)
    right = np.einsum("mij,mj->mi", s.fibers, F * a)
    return float(np.sqrt(phi.weights @ np.sum(np.abs(left - right) ** 2, axis=1)))


def ff_expectation(phi: SpectralPacket, p: LocalisationProfile, model) -> float:
    """``<phi, F_f(H0') phi>`` by fiber quadrature."""
    F = ff_weights(p, model.velocity_map(phi.energy_grid))
    return float(phi.weights @ np.sum(F * np.abs(phi.amplitudes) ** 2, axis=1))

"""Time delay in scattering theory: sojourn times versus the Eisenbud-Wigner formula.

Subpackages and modules
-----------------------
localisation
    Localisation profiles ``f`` and the derived functions ``R_f``, ``F_f``.
spectral
    Spectral packets, fiber scattering matrices and stationary expectations.
models
    Schrodinger models (single and coupled channels) and the Friedrichs-Lee model.
sojourn
    Sojourn times and time delays as truncated time integrals.
delay
    Dilation sweeps, extrapolation and verdicts.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, ConstraintError, ConvergenceError, DomainError,
                     GridSizingError, IncompatibleGridError, PacketValidityError,
                     PreparationError, TimeDelayError)
from .localisation import LocalisationProfile, make_profile

__all__ = [
    "__version__", "ConfigError", "ConstraintError", "ConvergenceError", "DomainError",
    "GridSizingError", "IncompatibleGridError", "LocalisationProfile", "PacketValidityError",
    "PreparationError", "TimeDelayError", "make_profile",
]

"""Scattering models and their model-independent operations."""

from .dynamics import (
    DecayRecord,
    asymptotic_coupling_check,
    critical_values,
    extract_S_timedomain,
    free_evolve,
    full_evolve,
    localisation_expectation,
    localisation_weights,
    outgoing_native,
    prepare_minus_state,
    scatter_function,
    stationary_smatrix,
)
from .friedrichs import FriedrichsModel, SpectralPropagator
from .grid import Grid, GridState
from .potentials import (
    BoxCoupling,
    GaussianBarrier,
    GaussianCoupling,
    NoPotential,
    Potential,
    SquareBarrier,
)
from .schrodinger import SchrodingerModel, SplitStepPropagator
from .smatrix import breit_wigner_fit, friedrichs_smatrix, level_shift, schrodinger_smatrix

__all__ = [
    "BoxCoupling", "DecayRecord", "FriedrichsModel", "GaussianBarrier", "GaussianCoupling",
    "Grid", "GridState", "NoPotential", "Potential", "SchrodingerModel", "SpectralPropagator",
    "SplitStepPropagator", "SquareBarrier", "asymptotic_coupling_check", "breit_wigner_fit",
    "critical_values", "extract_S_timedomain", "free_evolve", "friedrichs_smatrix",
    "full_evolve", "level_shift", "localisation_expectation", "localisation_weights",
    "outgoing_native", "prepare_minus_state", "scatter_function", "schrodinger_smatrix",
    "stationary_smatrix",
]

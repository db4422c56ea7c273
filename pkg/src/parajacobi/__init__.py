"""Numerics for N-periodically modulated Jacobi matrices whose one-period
transfer limit is a non-trivial Jordan block: transfer cocycles, shifted
conjugation, eigenvector asymptotics, Turan determinants, Christoffel-Darboux
kernel limits, and self-adjointness / spectrum classification.
"""

from .family import (
    FamilyDescriptor,
    PeriodicData,
    PerturbedFamily,
    build_bd_power,
    build_km,
    build_symmetric_bd,
    build_yafaev,
    family_from_config,
    modulated_envelope_gamma,
    perturb_l1,
    symmetric_bd_periodic,
)
from .parabolic import Case, ParabolicDecomposition, classify, decompose
from .tempered import TemperedLimits, estimate_limits, lambda_sets, tau
from .evolve import EigenTrace, eigenvector_trace, orthopoly, transfer_B, transfer_X
from .spectral import SpectrumReport, classify_selfadjoint, spectrum_report

__all__ = [
    "FamilyDescriptor", "PeriodicData", "PerturbedFamily",
    "build_bd_power", "build_km", "build_symmetric_bd", "build_yafaev",
    "family_from_config", "modulated_envelope_gamma", "perturb_l1",
    "symmetric_bd_periodic",
    "Case", "ParabolicDecomposition", "classify", "decompose",
    "TemperedLimits", "estimate_limits", "lambda_sets", "tau",
    "EigenTrace", "eigenvector_trace", "orthopoly", "transfer_B", "transfer_X",
    "SpectrumReport", "classify_selfadjoint", "spectrum_report",
    "__version__",
]

__version__ = "0.1.0"

"""Euler-Maruyama invariant measures for regime-switching diffusions.

Modules
-------
generator   Q-matrices, stationary laws, exact chain simulation, coupling tails.
spectral    Perron-Frobenius certificates and stepsize bounds.
dirichlet   Principal-eigenvalue certificates for reversible chains.
partition   Finite-partition reduction and the M-matrix test.
em          The EM scheme, model definitions and built-in examples.
measure     Hybrid Wasserstein distances and invariant-measure experiments.
cli         ``rsem`` command-line front end.
"""

from .exceptions import AdmissibilityWarning, RSEMError
from .generator import GeneratorMatrix, simulate_chain, stationary_distribution, validate_generator
from .spectral import RegimeBounds, certificate_report, spectral_certificate
from .em import BUILTINS, LinearRegimeModel, RegimeModel, SimulationConfig, simulate
from .measure import EmpiricalMeasure, wasserstein_p

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityWarning",
    "BUILTINS",
    "EmpiricalMeasure",
    "GeneratorMatrix",
    "LinearRegimeModel",
    "RSEMError",
    "RegimeBounds",
    "RegimeModel",
    "SimulationConfig",
    "certificate_report",
    "simulate",
    "simulate_chain",
    "spectral_certificate",
    "stationary_distribution",
    "validate_generator",
    "wasserstein_p",
]

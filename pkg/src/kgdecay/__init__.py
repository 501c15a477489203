"""Numerical decay certificates for damped Klein-Gordon models with
time-periodic dissipation and mass.

The pipeline: per-frequency fundamental solutions (propagator), monodromy
spectrum and contraction powers (monodromy), the high-frequency threshold
(highfreq), closed-form admissible mass perturbations (perturbation), and
long-horizon decay evidence (certify), orchestrated by a CLI (cli).
"""

from .coefficients import (
    ConstantMass,
    ModelSpec,
    PerturbedMass,
    PeriodicCoefficient,
    lambda_primitive,
    mean_value,
    symbol,
)
from .propagator import (
    PropagationResult,
    det2,
    eigenvalues_2x2,
    inv2,
    peano_baker_truncated,
    propagate,
    propagate_grid,
    spectral_norm_2x2,
    spectral_radius_2x2,
    system_matrix,
)
from .monodromy import (
    ContractionCertificate,
    MonodromySample,
    assemble_certificate,
    find_contraction_k,
    monodromy_at,
    monodromy_grid,
    scan_to_csv,
    spectral_radius_scan,
)
from .highfreq import (
    DiagonalizationFrame,
    ThresholdResult,
    find_threshold_N,
    frame_at,
    n_pm,
    suplarge_quantity,
    verify_highfreq_contraction,
)
from .perturbation import (
    EpsilonBound,
    epsilon_bound,
    gronwall_difference_bound,
    lambert_w0,
    perturbed_certificate,
    verify_perturbed_contraction,
)
from .certify import (
    DecayReport,
    decay_constants,
    fit_rate,
    gamma_of,
    sup_norm_curve,
)
from . import errors

__all__ = [
    "ConstantMass",
    "ContractionCertificate",
    "DecayReport",
    "DiagonalizationFrame",
    "EpsilonBound",
    "ModelSpec",
    "MonodromySample",
    "PerturbedMass",
    "PeriodicCoefficient",
    "PropagationResult",
    "ThresholdResult",
    "assemble_certificate",
    "decay_constants",
    "det2",
    "eigenvalues_2x2",
    "epsilon_bound",
    "errors",
    "find_contraction_k",
    "find_threshold_N",
    "fit_rate",
    "frame_at",
    "gamma_of",
    "gronwall_difference_bound",
    "inv2",
    "lambda_primitive",
    "lambert_w0",
    "mean_value",
    "monodromy_at",
    "monodromy_grid",
    "n_pm",
    "peano_baker_truncated",
    "perturbed_certificate",
    "propagate",
    "propagate_grid",
    "scan_to_csv",
    "spectral_norm_2x2",
    "spectral_radius_2x2",
    "spectral_radius_scan",
    "suplarge_quantity",
    "sup_norm_curve",
    "symbol",
    "system_matrix",
    "verify_highfreq_contraction",
    "verify_perturbed_contraction",
]

__version__ = "0.1.0"

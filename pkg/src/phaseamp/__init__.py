"""Heralded phase-concentrating amplification of coherent light, simulated in truncated Fock space."""

from .analytic import (
    AmplifierParams,
    approx_amplified,
    cal_I,
    cal_J,
    gaussian_moment,
    mu_amplified,
    mu_coherent,
    mu_displaced_thermal,
    mu_parametric,
    normalized_variance,
    optimal_noise,
    success_probability,
)
from .errors import (
    ConfigError,
    CutoffError,
    HeraldImpossibleError,
    IntegrationError,
    PhaseAmpError,
    SeriesError,
    TomographyError,
    UndefinedReferenceError,
)
from .fock import (
    CutoffPolicy,
    FockDensity,
    choose_cutoff,
    coherent_state,
    condition_on_click,
    detector_povm,
    displaced_thermal,
    beam_splitter_unitary,
    wigner_grid,
)
from .phase import PhaseStats, gain_and_gamma, holevo_variance, mu_canonical, phase_distribution
from .pipeline import MCConfig, MCEstimate, ValidationReport, amplify_exact, mc_heralded, validate_grid
from .tomography import QuadratureRecord, TomoConfig, fidelity, maxlik_reconstruct, sample_homodyne

__version__ = "0.1.0"

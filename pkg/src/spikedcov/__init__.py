"""Spiked covariance asymptotics and their Monte Carlo verification.

The library computes every closed-form prediction for the outlier
eigenstructure of a low-rank-plus-noise sample covariance (outlier
location, CLT variance with fourth-cumulant correction, eigenvector
cosine limit and fluctuation covariance, Marchenko-Pastur resolvent
identities, and a certified eigenvector perturbation bound), and ships a
reproducible simulation harness that confronts each prediction with data.
"""

from ._version import __version__
from .errors import (
    ConfigError,
    DegenerateSpectrumError,
    DomainError,
    EigensolverError,
    InvalidCumulantError,
    ResolventDomainError,
    SpikedCovError,
    SubcriticalSpikeError,
)
from .mp_law import (
    MpParams,
    companion_atom,
    companion_stieltjes,
    companion_stieltjes_deriv,
    mp_atom,
    mp_density,
    mp_support,
    resolvent_moment,
)
from .spike_theory import (
    SpikeSpectrum,
    TheoryPrediction,
    cosine_limit,
    eigenvalue_sigma2,
    eigenvector_covariance,
    predict,
    spike_backward,
    spike_derivative,
    spike_forward,
    theta_omega_c,
)
from .cumulants import (
    BilinearMoments,
    CumulantTensor,
    bilinear_jk_from_moments,
    bilinear_jk_from_samples,
    bilinear_jk_from_signal,
    contract,
    contraction_matrix,
    empirical_tensor,
    exact_tensor,
    knu_matrix,
)
from .distributions import SignalDistribution
from .model_gen import Dataset, RotationSpec, SpikedModelSpec, generate, population_axes
from .spectra import (
    SampleSpectrum,
    SchurEvaluator,
    decompose,
    q_matrix,
    quadform_residual,
    schur_K,
    schur_pair,
)
from .perturbation import (
    PerturbationResult,
    first_order_eigvec,
    fuzz_bound,
    reduced_resolvent,
)
from .mc_harness import (
    ExperimentConfig,
    McReport,
    McSection,
    aggregate,
    ks_normal,
    run_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]

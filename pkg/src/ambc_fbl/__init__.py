"""Finite-blocklength achievability and converse bounds, normal approximation,
and tag-error coupling for multiple-antenna ambient-backscatter channels."""

from .asymptotics import (
    AsymptoticSummary,
    berry_esseen_b,
    capacity,
    dispersion,
    normal_approximation,
    summarize,
    verify_sigma_maximizer,
)
from .bounds_ach import (
    AchievabilityResult,
    BetaEstimate,
    InfoDensityLaw,
    achievability_beta,
    achievability_rate,
    compute_c1,
    kappa_tau,
    sample_info_density,
)
from .bounds_conv import (
    ConverseConstants,
    ConverseResult,
    NPBetaEstimate,
    ball_volume_bound,
    converse_rate,
    np_beta_converse,
    pdf_sup_bound,
    sample_converse_density,
)
from .channel import (
    ChannelRealization,
    CompositePair,
    EigenSpectrum,
    Fading,
    composite,
    draw_channel,
    eigen_spectrum,
    product_gaussian_pdf,
)
from .cli import ExperimentConfig, SweepResult, SweepRow, emit_csv, main, run_sweep
from .errors import (
    ConfigError,
    ConvergenceError,
    InfeasibleTargetError,
    InsufficientSamplesError,
    OverflowRegimeError,
    ZeroSpectrumError,
)
from .numerics import (
    EmpiricalSample,
    SeededRng,
    bessel_k0,
    empirical_quantile,
    gaussian_q,
    gaussian_q_inv,
    log_bessel_i,
    log_bessel_i_upper,
    log_gamma,
    log_gamma_stirling,
    product_gamma_pdf,
)
from .power import PowerAllocation, waterfill
from .tag import (
    TagErrorModel,
    eps_given_tag_error,
    mrc_detect,
    mrc_statistic,
    simulate_tag_error,
    tag_error_given_eps,
)

__version__ = "0.1.0"

"""Contrastive divergence estimation for unnormalized exponential families."""

from .errors import (
    CdfamError,
    ChiSquareOverflowWarning,
    ConditionViolatedError,
    DegenerateStatisticError,
    InvalidInputError,
    ProjectionBoundaryWarning,
    UnsupportedOracleError,
)
from .expfam import (
    BoltzmannModel,
    ErgmModel,
    GaussianMeanModel,
    Model,
    ParamDomain,
    SampleSpace,
    TheoryConstants,
    check_parameter,
    chi2_divergence,
    domain_grid,
    fisher_information,
    log_partition,
    mean_statistic,
    phi,
    theory_constants,
)

from .kernels import (
    AlphaEstimate,
    AlphaSupResult,
    BoltzmannGibbsKernel,
    ErgmToggleKernel,
    ExactSamplerKernel,
    GaussianGibbsKernel,
    IdentityKernel,
    MarkovKernel,
    TransitionMatrix,
    alpha_sup,
    default_kernel,
    kernel_m_steps,
    kernel_step,
    make_kernel,
    restricted_alpha,
    transition_matrix,
)

from .cd import (
    BatchSchedule,
    CdConfig,
    StepSchedule,
    Trajectory,
    cd_gradient,
    cd_gradient_terms,
    m_schedule,
    offline_cd,
    online_cd,
    polyak_average,
    project,
)

from .bounds import (
    BoundConstants,
    LogZNorms,
    logz_norms,
    offline_bound,
    offline_noise_scale,
    offline_transients,
    online_bound,
    online_bound_terms,
    varphi,
)

from .harness import (
    EstimatorSpec,
    ExperimentConfig,
    ExperimentReport,
    emit_report,
    kappa_hat,
    rate_fit,
    run_experiment,
    variance_ratio,
)

__version__ = "0.1.0"

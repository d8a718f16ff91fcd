"""Sequential Monte Carlo smoothing with joint parameter learning for
state-space models: learning filters, backward-pass smoothers, MCMC
references, marginal-likelihood estimators and a benchmark harness."""

__version__ = "0.1.0"

from .config import AlgorithmSpec, ExperimentConfig, load_experiment_config
from .errors import (
    DataError,
    DegenerateWeightsError,
    InsufficientSampleError,
    MetricError,
    NumericalDegeneracyError,
    SmcError,
    SupportError,
)
from .evidence import (
    EvidenceEstimate,
    harmonic_mean_log_marginal,
    smc_log_marginal,
)
from .filters import (
    FilterHistory,
    GaussianMoments,
    ParticleCloud,
    bootstrap_filter,
    ess,
    kalman_filter,
    liu_west_filter,
    resample,
    storvik_filter,
)
from .harness import MetricsReport, match_budgets, run_experiment
from .mcmc import McmcChain, gibbs_ffbs, single_site_mh
from .metrics import (
    CorrelationDiagnostic,
    ParamSummary,
    mae_star,
    maep_star,
    standardized_errors,
    state_param_correlation,
)
from .models import (
    LinearGaussian,
    ModelSpec,
    ParamBlock,
    StateSpaceModel,
    get_model,
    simulate,
)
from .smoothers import (
    JointGaussianApprox,
    SmoothingDraws,
    ffbs_draw,
    fit_joint_gaussian,
    godsill_backward,
    pls_smooth,
    plsa_smooth,
    refilter_ffbs,
    refilter_smooth,
)

__all__ = [
    "AlgorithmSpec",
    "CorrelationDiagnostic",
    "DataError",
    "DegenerateWeightsError",
    "EvidenceEstimate",
    "ExperimentConfig",
    "FilterHistory",
    "GaussianMoments",
    "InsufficientSampleError",
    "JointGaussianApprox",
    "LinearGaussian",
    "McmcChain",
    "MetricError",
    "MetricsReport",
    "ModelSpec",
    "NumericalDegeneracyError",
    "ParamBlock",
    "ParamSummary",
    "ParticleCloud",
    "SmcError",
    "SmoothingDraws",
    "StateSpaceModel",
    "SupportError",
    "bootstrap_filter",
    "ess",
    "ffbs_draw",
    "fit_joint_gaussian",
    "get_model",
    "gibbs_ffbs",
    "godsill_backward",
    "harmonic_mean_log_marginal",
    "kalman_filter",
    "liu_west_filter",
    "load_experiment_config",
    "mae_star",
    "maep_star",
    "match_budgets",
    "pls_smooth",
    "plsa_smooth",
    "refilter_ffbs",
    "refilter_smooth",
    "resample",
    "run_experiment",
    "simulate",
    "single_site_mh",
    "smc_log_marginal",
    "standardized_errors",
    "state_param_correlation",
    "storvik_filter",
]

"""Design-based estimators of sample and population average treatment effects."""

from .design import (
    AssignmentPlan,
    SamplingPlan,
    assign_treatment,
    poisson_sample,
    replicate_rng,
    systematic_pps_sample,
    weighted_sample_without_replacement,
)
from .diagnostics import (
    DeltaReport,
    delta_statistic,
    hajek_bias_oracle,
    qq_points,
    sate_bias_oracle,
    within_ks_band,
)
from .errors import *  # noqa: F401,F403
from .estimators import (
    EstimatorSpec,
    double_hajek,
    evaluate,
    hajek_mean,
    horvitz_thompson_mean,
    oracle_nu,
    oracle_sate,
    post_stratified,
    sate_diff_means,
    single_hajek,
    tau_sd,
)
from .model import (
    ESTIMATOR_IDS,
    EstimateReport,
    ExperimentData,
    Population,
    SampleDraw,
    normalize_weights,
    validate_experiment,
)
from .simulation import DGPConfig, StudyConfig, gamma_sweep, generate_population, run_study
from .strata import StrataPartition, build_partition, repair_partition, strata_from_weights
from .uncertainty import (
    BootstrapConfig,
    bootstrap_many,
    bootstrap_se,
    hh_approx_variance,
    hh_plugin_variance,
    mse_decomposition,
    neyman_sate_var_estimate,
    neyman_sate_variance,
)

__version__ = "0.1.0"

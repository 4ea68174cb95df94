"""Noisy importance sampling with noise-aware optimal proposals."""

from .errors import NoisyISError
from .estimators import (
    EstimatorReport,
    ReplicationSummary,
    WeightedEnsemble,
    estimate_i_self,
    estimate_i_std,
    estimate_z,
    replicate,
    run_noisy_is,
)
from .experiments import (
    ExperimentConfig,
    RatioCurve,
    emit_proposal_curves,
    run_gaussian_experiment,
    run_uniform_experiment,
)
from .models import (
    NoiseModel,
    TargetFunction,
    VectorFunction,
    make_bernoulli_noise,
    make_folded_gaussian_noise,
    make_latent_variable_noise,
    make_multiplicative_lognormal_noise,
)
from .proposals import (
    GridTable,
    Proposal,
    build_proposal_from_shape,
    optimal_proposal_for_self,
    optimal_proposal_for_std,
    optimal_proposal_for_z,
)
from .variance import (
    QuadratureSpec,
    VarianceReport,
    cov_e_z,
    quadrature,
    v_min,
    v_sub_opt,
    var_i_self_component,
    var_i_std_component,
    var_z_theoretical,
)

__version__ = "0.1.0"

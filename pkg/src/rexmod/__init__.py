"""Recursive exponential models: DAG-factored discrete distributions whose
conditional tables are tied exponential-family models.

The package evaluates likelihoods, posterior marginals, score vectors and
observed-information matrices under incomplete data, and builds normal or
Dirichlet priors from expert elicitations.  Estimation loops are out of
scope; optimizers consume the derivatives exposed here.
"""

from .derivatives import (
    InfoMatrix,
    ScoreVector,
    information,
    local_information,
    local_score,
    posterior_information,
    posterior_score,
    prior_information_matrix,
    prior_score_vector,
    sample_information,
    sample_score,
    score,
)
from .errors import (
    CapExceeded,
    CycleDetected,
    DimensionMismatch,
    FileFormatError,
    InvalidBestGuess,
    InvalidLocalModel,
    MissingPriorBlock,
    ModelError,
    NonConvergence,
    NonFinite,
    NonPositiveInterval,
    RexmodError,
    SingularCovariance,
    SingularHessian,
    SupportViolation,
    TyingShapeMismatch,
    UnknownLevel,
    UnknownVariable,
    ZeroEvidenceProbability,
    ZeroProbability,
)
from .inference import (
    CountTable,
    MarginalTable,
    Observation,
    Sample,
    completions,
    expected_counts,
    family_marginal,
    likelihood,
    pair_family_marginal,
    posterior_marginal,
    sample_log_likelihood,
)
from .model import (
    LocalModel,
    Network,
    ParameterSet,
    TyingClass,
    Variable,
    build_network,
    joint_prob,
    linear_design_from_values,
    local_distribution,
    log_partition,
    probs_from_theta,
    stat_cov,
    stat_mean,
    theta_from_probs,
)
from .priors import (
    DirichletPrior,
    DirichletPriorBlock,
    Elicitation,
    ElicitationBlock,
    FitResult,
    NormalPrior,
    NormalPriorBlock,
    beta_from_intervals,
    dirichlet_from_elicitation,
    dirichlet_prior_information,
    dirichlet_prior_score,
    elicit_dirichlet_prior,
    elicit_normal_prior,
    fit_theta_star,
    kl_discrepancy,
    normal_prior_information,
    normal_prior_score,
    prior_log_density,
    prob_gradient,
)

__version__ = "0.1.0"

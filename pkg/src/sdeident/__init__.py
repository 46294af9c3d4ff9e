"""sdeident: identifiability analysis, simulation and estimation for the
generators of linear stochastic differential equations.

Decides whether the generator (drift matrix plus squared-diffusion map) of a
linear SDE is recoverable from the law of its solution started at a fixed
initial state, explains failures geometrically, constructs observationally
equivalent counterexamples, and validates the decisions empirically through
moment propagation, trajectory simulation, maximum-likelihood refits and
post-intervention moment comparisons.
"""

from .exceptions import (
    CommutativityError,
    EstimationError,
    IndefiniteCovarianceError,
    ModelValidationError,
    NonFiniteTrajectoryError,
    RepeatedEigenvaluesError,
    SdeIdentError,
)
from .models import (
    AdditiveSDE,
    MultiplicativeSDE,
    derive_additive,
    derive_multiplicative,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    validate,
)
from .identifiability import (
    IdentReport,
    SubspaceDiagnosis,
    check_additive,
    check_commuting,
    check_controllability,
    check_multiplicative,
    construct_confounder,
    diagnose_subspace,
    genericity_probe,
)
from .moments import (
    MomentCurve,
    TransitionMoments,
    covariance_additive,
    cross_covariance_additive,
    mean_curve,
    moment_curve,
    second_moment_multiplicative,
    transition_moments_additive,
)
from .simulate import (
    TrajectorySet,
    load_trajectories,
    simulate_commuting_explicit,
    simulate_em,
    simulate_exact_additive,
)
from .estimate import (
    ExperimentSpec,
    FitResult,
    fit,
    nll_additive,
    nll_multiplicative_em,
    run_experiment,
)
from .intervention import (
    InterventionSpec,
    PostInterventionAdditive,
    PostInterventionMultiplicative,
    compare_post_intervention,
    intervene,
    post_moments_additive,
    post_moments_multiplicative,
)

__version__ = "0.1.0"

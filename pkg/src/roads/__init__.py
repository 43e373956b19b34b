"""Robust causal discovery under imperfect structural constraints."""

from .graphs import Dag, generate_er, generate_sf, is_acyclic, topological_order
from .losses import (
    AlmState,
    LinearParams,
    LossWeights,
    MlpParams,
    acyclicity_h,
    adjacency_of,
    alm_penalty,
    alm_update,
    data_loss_golem,
    data_loss_ls,
    eca_penalty,
    knowledge_loss_linear,
    knowledge_loss_sigmoid,
    ntsb_penalty,
)
from .metrics import EvalReport, binarize, evaluate_weights, f1_report, shd
from .mgda import (
    FitResult,
    MgdaConfig,
    TaskGradients,
    adam_step,
    descent_direction,
    normalize,
    roads_fit,
    solve_lambda,
)
from .priors import (
    AlignedPrior,
    SurrogateConfig,
    align,
    candidate_parents,
    fit_lasso,
    fit_ols,
    fit_random_forest,
    generate_constraints,
    permutation_importance,
)
from .sem import (
    SemSpec,
    sample_linear_weights,
    simulate_gp,
    simulate_linear,
    simulate_mlp,
    standardize_nv,
)

__version__ = "0.1.0"

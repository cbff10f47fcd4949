"""Shared-forest Bayesian sum-of-trees models.

One ensemble of decision-tree topologies is shared across several model
components (binary hurdle, conditional mean, conditional variance), so
features learned from an informative response help the weakly informed
ones.  See README.md for the model catalog and usage.
"""

from .data import Dataset, load_csv, preprocess_response, quantile_normalize
from .engine import SharedForestSampler, Snapshot
from .errors import (
    ConfigError,
    DataError,
    InvalidTreeError,
    NumericError,
    SharedForestError,
)
from .models import (
    BinaryProbitModel,
    ChainConfig,
    GammaHurdleModel,
    GaussianRegressionModel,
    LogNormalHurdleModel,
    MixedResponseModel,
    PosteriorDraws,
    PriorConfig,
    default_prior_gamma,
    default_prior_lognormal,
    default_prior_mixed,
    gamma_conditional_moments,
    lognormal_conditional_moments,
    model_from_kind,
    predict_summary,
    prior_forest_values,
    solve_loggamma_hyperparams,
)
from .tree_prior import (
    SplitProbabilities,
    TreePriorParams,
    branch_probability,
    propose_move,
    sample_tree_from_prior,
    tree_log_prior,
)
from .trees import Tree, evaluate_forest

__version__ = "0.1.0"

"""forest-lab: a simulation lab for centered random forests.

Dyadic-cell trees with exact endpoint arithmetic, the local-averaging
forest estimator, data-driven coordinate selection, closed-form risk
bounds, Monte Carlo bias/variance decomposition with enumeration oracles,
and a deterministic experiment CLI.
"""

__version__ = "0.1.0"

from .adaptive import (
    AdaptiveCounts,
    SplitEvaluation,
    adaptive_linear_tree,
    approx_split_counts,
    best_split,
    criterion_drop,
    empirical_delta,
    estimate_selection_probs,
    select_coordinate,
)
from .analytics import (
    DecompositionEstimate,
    RateFit,
    RiskEstimate,
    expected_overlap,
    expected_overlap_mc,
    fit_rate_exponent,
    halving_upper_bound,
    mc_bias_variance,
    mc_risk,
    multinomial_halving_expectation,
    multinomial_halving_mc,
    normal_approx_check,
    simulate_forest_predictions,
)
from .bounds import (
    BoundInputs,
    LowerBoundForms,
    ReferenceRates,
    alpha_exponent,
    bias_upper_bound,
    lower_bound_forms,
    optimal_leaf_count,
    reference_rates,
    risk_upper_bound,
    variance_upper_bound,
)
from .cells import DyadicCell, cell_from_point, endpoints_from_expansion, overlap_volume, overlap_volume_log2
from .forest import (
    Dataset,
    ForestModel,
    ModelSpec,
    depth_for_leaves,
    fit_forest,
    forest_predict,
    tree_predict,
    weights,
)
from .rng import derive, generator
from .trees import (
    CenteredTree,
    LeafAssignment,
    SelectionProbs,
    overlap_via_counts,
    overlap_via_counts_log2,
    route,
)

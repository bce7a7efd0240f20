"""Margin bounds and complexity measures for convex combinations of decision stumps."""

from .covering import (
    CoveringProfile,
    EntropyCurve,
    base_covering_profile,
    bound_theorem5,
    capped_entropy_integral,
    empirical_distance,
    entropy_integral,
    exact_covering,
    fixed_point,
    greedy_covering,
    hull_entropy_reference,
    n_infty,
    rademacher_estimate,
)
from .ensemble import (
    BoundParams,
    ConvexEnsemble,
    Dataset,
    Stump,
    dyadic_grid,
    evaluate_ensemble,
    load_ensemble,
    margin,
    normalize,
    save_ensemble,
    tail_weight,
)
from .errors import (
    ConvergenceError,
    DegenerateEnsembleError,
    IngestionError,
    StructuralError,
    ValidationError,
)
from .harness import ExperimentConfig, emit_plot_data, load_csv, run_experiment, save_csv, synth_data
from .margins import (
    MarginProfile,
    RampLoss,
    margin_cdf,
    margin_profile,
    min_margin,
    ramp_mean,
    test_error,
)
from .randomized import (
    MaureySample,
    check_bernstein_tails,
    check_cluster_variance,
    check_maurey_tail,
    cluster_sample,
    maurey_sample,
    sigma_hat,
)
from .sparsity import (
    BoundReport,
    bound_gamma_dim,
    bound_sparsity,
    classic_bound,
    effective_dimension,
    example_rate,
    gamma_dimension,
    solve_concave,
    solve_phi,
    theorem1_bound,
)
from .trainers import AdaBoostState, adaboost, bagging, best_stump, bootstrap_sample
from .variance import (
    ClusterDecomposition,
    bound_cluster,
    bound_variance,
    cluster_count,
    cluster_variance,
    partition_decomposition,
    pointwise_variance,
    search_clusters,
    variance_tail,
)

__version__ = "0.1.0"

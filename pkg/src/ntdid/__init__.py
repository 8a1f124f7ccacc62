"""Child-penalty estimation via normalized 2x2 comparisons.

The package builds every estimator from (gender, treatment-group, age)
cell means of a long earnings panel: reconstruction of counterfactual
levels against closest-not-yet-treated controls, gender gaps in level and
normalized effects, pre-treatment validation suites, influence-function
cluster inference, bias bounding, covariate-adjusted doubly robust
variants, aggregation across treatment timing, a conventional event study
for contrast, and a synthetic generator with a closed-form causal oracle.
"""

from .aggregation import (
    TreatmentDistribution,
    empirical_distribution,
    normal_distribution,
    reference_reweight,
    rho_agg,
    theta_agg1,
    theta_agg2,
    uniform_distribution,
)
from .api import (
    Aggregator,
    DoublyRobustEstimator,
    EventStudyEstimator,
    NtdEstimator,
    PretrendValidator,
)
from .bias import (
    BiasGridRow,
    bias_corrected_gap,
    bias_factor,
    bias_grid,
    impute_rho,
    solve_apo_star,
    td_decomposition,
)
from .covariates import (
    FoldAssignment,
    NuisanceFit,
    apo_with_covariates,
    assign_folds,
    ate_theta_with_covariates,
    fit_nuisances,
    nuisances_from_oracle,
    td_with_covariates,
)
from .dgp import DgpOracle, DgpSpec, generate, oracle_estimand, read_spec
from .errors import NtdidError
from .estimators import (
    CORE_ESTIMANDS,
    Estimand,
    EstimateRecord,
    decompose_gap,
    delta_apo,
    delta_ate,
    delta_theta,
    evaluate,
    ntd_alt,
    ntd_gap,
    td_gap,
)
from .event_study import EventStudyFit, event_study_gap, fit_event_study
from .inference import (
    InfluenceVector,
    cluster_bootstrap,
    cluster_se,
    estimate,
    estimate_grid,
    influence_composite,
    influence_mu,
)
from .panel import (
    CellStats,
    PanelData,
    TwoByTwoSlice,
    build_pretrend_slice,
    build_two_by_two,
    cell_mean,
    load_panel,
    write_panel,
)
from .validation import (
    ValidationResult,
    ntd_gate,
    pretrend_suite,
    pretrend_test,
    rho_pretrend_series,
)

__version__ = "0.1.0"

"""Finite-population engine for instrumental-variable identification checks.

Three layers:

- ``population`` / ``scenarios``: units with complete counterfactual tables,
  compliance classification, scenario generation, sampling, and the exact
  enumerated "infinite sample";
- ``oracle``: true causal parameters and theorem right-hand sides computed
  from counterfactuals, plus observable population estimands computed from
  the joint law only;
- ``estimators`` / ``compliers`` / ``diagnostics``: what an analyst can do
  with observed rows, including bootstrap inference, complier profiling,
  assumption checks, and sensitivity analyses.
"""

from .compliers import (
    ComplierProfile,
    bayes_ratio,
    complier_mean,
    complier_outcome_cdf,
    complier_profile,
    kappa,
    qte,
)
from .curves import StepCDF
from .diagnostics import (
    MonotonicityCheck,
    OlsDecomposition,
    SensitivityReport,
    defier_sensitivity,
    exclusion_sensitivity,
    misparameterization_experiment,
    monotonicity_check,
    ols_decomposition,
    ols_weighted_effect,
    relevance_check,
    saturation_check,
)
from .errors import (
    ConditioningError,
    ConfigError,
    DataError,
    EstimationError,
    IdentificationError,
    InferenceError,
    LateEngineError,
    MonotonicityViolationError,
    OverlapError,
    UnsupportedError,
    WeakInstrumentError,
)
from .estimators import (
    EstimateReport,
    acr_weights_hat,
    bootstrap,
    itt_hat,
    iv_g,
    ols_slope,
    tsls_saturated,
    tsls_saturated_x,
    wald,
)
from .fixtures import load_fixture
from .oracle import (
    CausalParameter,
    compute_parameter,
    population_estimand,
    true_acr,
    true_acr_with_covariates,
    true_amcr,
    true_basic,
    true_complier_mean,
    true_complier_outcome,
    true_iv_combination,
    true_late,
    true_qte,
)
from .population import (
    ComplianceType,
    ContinuousTreatment,
    ObservedSample,
    Population,
    PotentialUnit,
    classify,
    enumerate_cells,
    load_population,
    realize,
    save_population,
)
from .scenarios import (
    ContinuousSpec,
    CovariateSpec,
    LinearSelectionSpec,
    ScenarioConfig,
    binary_iv_config,
    continuous_config,
    covariate_cells_config,
    make_scenario,
    multi_d_config,
    multi_z_binary_d_config,
    weighted_effect_config,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

"""Kähler information geometry of linear filters and superharmonic shrinkage priors.

Modules:
  filter_model  ARFIMA transfer functions, impulse responses, cepstra
  geometry      potential, metric, connection, Ricci, Laplacian, certificates
  priors        superharmonic prior ansätze, certification, risk formula
  risk_lab      Bayes KL prediction-risk experiments on AR(1)/AR(2)
  cli           command-line front end (`kfprior`)
"""

__version__ = "0.1.0"

from .errors import (
    ConsistencyError,
    DomainError,
    GeometryError,
    KfpError,
    PrecisionError,
    PrecisionWarning,
    SpecFileError,
)
from .filter_model import (
    CepstrumSeries,
    FilterModel,
    ImpulseSeries,
    cepstrum_coeffs,
    holomorphic_param_derivative,
    impulse_response,
    read_model_spec,
    write_model_spec,
)
from .geometry import (
    ConnectionTensor,
    HermitianMetric,
    KahlerCertificate,
    NumericalField,
    ParamPoint,
    PotentialField,
    ScalarField,
    check_kahler,
    connection,
    dilogarithm,
    kahler_potential,
    laplace_beltrami,
    metric_closed_form,
    metric_series,
    ricci,
    sample_domain_points,
)
from .priors import (
    ExpNegPotentialField,
    KahlerAR2Field,
    KappaAnsatz,
    PriorValue,
    PsiAnsatz,
    ShrinkageField,
    SqrtField,
    SuperharmonicityReport,
    TanakaField,
    catalog_ids,
    certify_superharmonic,
    get_prior_field,
    jeffreys_density,
    kappa_value_and_derivatives,
    laplacian_of_psi,
    prior_value,
    psi_value,
    risk_improvement,
    sqrt_psi_certificate,
)
from .risk_lab import (
    ExperimentConfig,
    PredictiveDensity,
    RiskEstimate,
    kl_risk,
    predictive_density,
    read_experiment_config,
    simulate_series,
    write_experiment_config,
)

__all__ = [
    "__version__",
    "KfpError",
    "SpecFileError",
    "DomainError",
    "GeometryError",
    "PrecisionError",
    "ConsistencyError",
    "PrecisionWarning",
    "FilterModel",
    "CepstrumSeries",
    "ImpulseSeries",
    "cepstrum_coeffs",
    "impulse_response",
    "holomorphic_param_derivative",
    "read_model_spec",
    "write_model_spec",
    "ParamPoint",
    "HermitianMetric",
    "ConnectionTensor",
    "KahlerCertificate",
    "ScalarField",
    "PotentialField",
    "NumericalField",
    "kahler_potential",
    "metric_series",
    "metric_closed_form",
    "connection",
    "ricci",
    "laplace_beltrami",
    "check_kahler",
    "sample_domain_points",
    "dilogarithm",
    "KappaAnsatz",
    "PsiAnsatz",
    "ShrinkageField",
    "SqrtField",
    "KahlerAR2Field",
    "TanakaField",
    "ExpNegPotentialField",
    "SuperharmonicityReport",
    "PriorValue",
    "kappa_value_and_derivatives",
    "psi_value",
    "laplacian_of_psi",
    "certify_superharmonic",
    "sqrt_psi_certificate",
    "jeffreys_density",
    "risk_improvement",
    "prior_value",
    "get_prior_field",
    "catalog_ids",
    "ExperimentConfig",
    "RiskEstimate",
    "PredictiveDensity",
    "simulate_series",
    "predictive_density",
    "kl_risk",
    "read_experiment_config",
    "write_experiment_config",
]

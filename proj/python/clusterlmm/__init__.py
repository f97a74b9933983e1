"""Clustered linear mixed-effects models.

Profile maximum-likelihood fits of y_i = X_i beta + Z_i b_i + eps_i with
diagonal random-effect covariance, confidence intervals for the
random-effect variances that stay valid when the number of clusters is
small, empirical BLUP prediction, and seeded simulation studies.
"""

from clusterlmm._core import (
    Cluster,
    ConfidenceInterval,
    Dataset,
    DegenerateFitError,
    FitOptions,
    InputError,
    MLFit,
    ModelSpec,
    PredictionResult,
    Scenario,
    StudyError,
    StudySummary,
    ValidationReport,
    blup,
    chisq_cdf,
    chisq_quantile,
    classical_interval,
    expected_gap,
    fit,
    fixed_m_interval,
    generate,
    ls_predict,
    method_of_moments_start,
    normal_quantile,
    parse_scenario,
    parse_scenario_file,
    prediction_gap,
    read_csv,
    run_study,
    validate,
)

__all__ = [
    "Cluster",
    "ConfidenceInterval",
    "Dataset",
    "DegenerateFitError",
    "FitOptions",
    "InputError",
    "MLFit",
    "ModelSpec",
    "PredictionResult",
    "Scenario",
    "StudyError",
    "StudySummary",
    "ValidationReport",
    "blup",
    "chisq_cdf",
    "chisq_quantile",
    "classical_interval",
    "expected_gap",
    "fit",
    "fixed_m_interval",
    "generate",
    "ls_predict",
    "method_of_moments_start",
    "normal_quantile",
    "parse_scenario",
    "parse_scenario_file",
    "prediction_gap",
    "read_csv",
    "run_study",
    "validate",
]

__version__ = "0.1.0"

"""Synthetic control estimation, placebo inference and logistic vaccination curves."""

from ._core import (
    KeyedTable,
    Panel,
    SynthctlError,
    __version__,
    clean_series,
    decile_summary,
    enforce_monotone,
    fit_logistic,
    fit_synth,
    interpolate_missing,
    logistic_predict,
    objective,
    p_value,
    placebo,
    project_to_simplex,
    rolling_mean,
    run_cli,
    select_predictors,
    solve_w,
    sparsify_weights,
)

__all__ = [
    "KeyedTable",
    "Panel",
    "SynthctlError",
    "__version__",
    "clean_series",
    "decile_summary",
    "enforce_monotone",
    "fit_logistic",
    "fit_synth",
    "interpolate_missing",
    "logistic_predict",
    "objective",
    "p_value",
    "placebo",
    "project_to_simplex",
    "rolling_mean",
    "run_cli",
    "select_predictors",
    "solve_w",
    "sparsify_weights",
]

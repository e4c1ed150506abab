"""Cross-temporal reconciliation of count forecasts."""

from ._ctrecon import (
    CrossTemporalForecast,
    Hierarchy,
    Panel,
    TemporalScheme,
    __version__,
    actuals,
    base_forecasts,
    coherence_error,
    cross_temporal_summing_matrix,
    feature_names,
    gls_reconcile,
    mase,
    outer_count,
    ratio_table,
    reconcile,
    run_experiment,
    synthetic_panel,
    wape,
)

__all__ = [
    "CrossTemporalForecast",
    "Hierarchy",
    "Panel",
    "TemporalScheme",
    "__version__",
    "actuals",
    "base_forecasts",
    "coherence_error",
    "cross_temporal_summing_matrix",
    "feature_names",
    "gls_reconcile",
    "mase",
    "outer_count",
    "ratio_table",
    "reconcile",
    "run_experiment",
    "synthetic_panel",
    "wape",
]

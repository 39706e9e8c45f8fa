"""Missing-data strategies for landmark rows.

Every strategy is a scikit-learn style estimator: ``fit`` on training rows,
then ``impute`` returns one completed frame per completion (several only
for multiple imputation). ``impute_row`` completes the last row of a single
episode's landmark history, giving the same values as imputing that row
inside a batch.
"""
from ..exceptions import ConfigError
from .base import (
    INDICATOR_SUFFIX,
    LandmarkImputer,
    LandmarkStatistics,
    augment_missing_indicators,
    indicator_columns,
    indicator_values,
)
from .chained import MICEImputer, RegressionImputer
from .forest import MissForestImputer
from .indicators import WithIndicators
from .mixed import MixedModelImputer
from .simple import LOCFImputer, MedianModeImputer, MissingIndicatorImputer

STRATEGIES = (
    "missing_indicator",
    "median_mode",
    "locf",
    "regression",
    "mixed_model",
    "missforest",
    "mice_xx",
    "mice_yx",
)


def make_imputer(tag, schema, seed=0, **params):
    """Build an unfitted imputer from its strategy tag.

    A ``+ind`` suffix wraps the strategy in :class:`WithIndicators`.
    ``params`` are passed to the strategy's constructor.
    """
    if tag.endswith("+ind"):
        return WithIndicators(make_imputer(tag[: -len("+ind")], schema, seed, **params))
    if tag == "missing_indicator":
        return MissingIndicatorImputer(schema, **params)
    if tag == "median_mode":
        return MedianModeImputer(schema, **params)
    if tag == "locf":
        return LOCFImputer(schema, **params)
    if tag == "regression":
        return RegressionImputer(schema, **params)
    if tag == "mixed_model":
        return MixedModelImputer(schema, **params)
    if tag == "missforest":
        return MissForestImputer(schema, seed=seed, **params)
    if tag in ("mice_xx", "mice_yx"):
        return MICEImputer(schema, outcome_mode=tag[-2:], seed=seed, **params)
    raise ConfigError(f"unknown strategy {tag!r}; known: {', '.join(STRATEGIES)} (optionally with '+ind')")


__all__ = [
    "INDICATOR_SUFFIX",
    "LandmarkImputer",
    "LandmarkStatistics",
    "LOCFImputer",
    "MedianModeImputer",
    "MICEImputer",
    "MissForestImputer",
    "MissingIndicatorImputer",
    "MixedModelImputer",
    "RegressionImputer",
    "STRATEGIES",
    "WithIndicators",
    "augment_missing_indicators",
    "indicator_columns",
    "indicator_values",
    "make_imputer",
]

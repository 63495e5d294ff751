"""Gradient-boosted trees for every parameter of a response distribution."""

__version__ = "0.1.0"

from .booster import (  # noqa: E402
    BoostConfig,
    Ensemble,
    ExpectileModel,
    LssModel,
    PredictiveDistribution,
    fit,
    fit_expectiles,
    fit_step1,
    fit_step2,
    load_model,
    predict_interval,
    predict_params,
    predict_quantiles,
    sample_predictive,
    save_model,
)
from .data import Dataset, FeatureMeta, encode_categoricals, from_arrays, load_csv, split_train_test  # noqa: E402
from .distributions import FAMILY_NAMES, get_family, unconditional_mle  # noqa: E402
from .tree import TreeConfig  # noqa: E402

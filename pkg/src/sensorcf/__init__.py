"""Collaborative filtering by Bayesian fusion of user and item rating
sensors, with correlation and personality-diagnosis baselines and a full
benchmark harness (protocols, error metrics, randomization significance).
"""

from .baselines import (
    CorrelationPredictor,
    PDParams,
    PersonalityDiagnosis,
    correlation_predict,
    pd_predict,
)
from .datasets import synthetic_ratings
from .evaluation import (
    EvalReport,
    EvalRow,
    PredictionRecord,
    extreme_filter,
    mae,
    make_algorithm,
    paired_sample_diffs,
    randomization_test,
    run_protocol,
    significance_pair,
)
from .predictor import (
    FittedModel,
    NoisySensorPredictor,
    PosteriorDistribution,
    SensorRef,
    build_model,
    load_model,
    posterior,
    predict,
    save_model,
)
from .ratings import (
    InsufficientRatingsError,
    PairPrior,
    RatingPrior,
    RatingScale,
    RatingsFormatError,
    RatingsMatrix,
    SplitSpec,
    load_ratings,
    pair_prior,
    partition_users,
    rating_prior,
    split_user,
)
from .sensors import (
    DegenerateSensorError,
    NoDataError,
    PairedObservations,
    SensorFit,
    UnfittableSensorError,
    fit_noisy1,
    fit_noisy2,
    log_predictive_density,
    predictive_density,
)

__version__ = "0.1.0"

__all__ = [
    "CorrelationPredictor",
    "DegenerateSensorError",
    "EvalReport",
    "EvalRow",
    "FittedModel",
    "InsufficientRatingsError",
    "NoDataError",
    "NoisySensorPredictor",
    "PDParams",
    "PairPrior",
    "PairedObservations",
    "PersonalityDiagnosis",
    "PosteriorDistribution",
    "PredictionRecord",
    "RatingPrior",
    "RatingScale",
    "RatingsFormatError",
    "RatingsMatrix",
    "SensorFit",
    "SensorRef",
    "SplitSpec",
    "UnfittableSensorError",
    "build_model",
    "correlation_predict",
    "extreme_filter",
    "fit_noisy1",
    "fit_noisy2",
    "load_model",
    "load_ratings",
    "log_predictive_density",
    "mae",
    "make_algorithm",
    "pair_prior",
    "paired_sample_diffs",
    "partition_users",
    "pd_predict",
    "posterior",
    "predict",
    "predictive_density",
    "randomization_test",
    "rating_prior",
    "run_protocol",
    "save_model",
    "significance_pair",
    "split_user",
    "synthetic_ratings",
]

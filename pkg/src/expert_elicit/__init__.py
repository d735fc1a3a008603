"""Budgeted expert feedback on sparse regression weights for tiny-n, large-p prediction."""

from .elicitation import (
    ExpertModel,
    Feedback,
    Strategy,
    StrategySpec,
    TargetCase,
    apply_feedback,
    estimate_theorem_conditions,
    expert_answer,
    oracle_best_single_replacement,
    rank_features,
    run_elicitation,
    target_loss,
)
from .experiment import ExperimentConfig, LossCurve, aggregate, run_experiment
from .regression import (
    CvResult,
    Dataset,
    LassoConfig,
    WeightVector,
    cv_select_lambda,
    fit_lasso,
    predict,
    soft_threshold,
)
from .synthgen import FeatureDistribution, Scenario, SyntheticConfig

__version__ = "0.1.0"

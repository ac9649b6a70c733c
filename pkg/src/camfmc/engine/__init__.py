"""Estimator execution: sampling, model handles, ledger and estimates."""

from .estimators import (
    CAMFMCResult,
    MFMCResult,
    STATS_SOURCES,
    evaluate,
    mc_estimate,
    mfmc_estimate,
    run_ca_mfmc,
)
from .external import ExternalModel, ExternalModelError
from .ledger import BudgetExceededError, BudgetLedger
from .models import (
    EvaluationError,
    FunctionModel,
    SyntheticHigh,
    SyntheticLowFi,
    synthetic_high,
    synthetic_lowfi_train,
    synthetic_static,
    synthetic_trainer,
)
from .sampling import SampleBatch, derive_seed, draw_samples, draw_uniform

__all__ = [
    "BudgetExceededError",
    "BudgetLedger",
    "CAMFMCResult",
    "EvaluationError",
    "ExternalModel",
    "ExternalModelError",
    "FunctionModel",
    "MFMCResult",
    "STATS_SOURCES",
    "SampleBatch",
    "SyntheticHigh",
    "SyntheticLowFi",
    "derive_seed",
    "draw_samples",
    "draw_uniform",
    "evaluate",
    "mc_estimate",
    "mfmc_estimate",
    "run_ca_mfmc",
    "synthetic_high",
    "synthetic_lowfi_train",
    "synthetic_static",
    "synthetic_trainer",
]

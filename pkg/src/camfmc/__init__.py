"""Context-aware multi-fidelity Monte Carlo estimation.

Low-fidelity models that are trained on high-fidelity samples compete with
the estimator for the same budget. This package chooses their training set
sizes, allocates the remaining budget across the model hierarchy and runs
the resulting estimator.
"""

from .allocate import (
    Allocation,
    DegenerateHierarchyError,
    Hierarchy,
    InfeasibleBudgetError,
    OrderingError,
    Violation,
    analytic_mse,
    check_ordering,
    estimator_variance,
    optimal_allocation,
    reorder_models,
)
from .budget import (
    ConvexityCertificate,
    ConvexityError,
    ObjectiveContext,
    TrainableSpec,
    TrainingPlan,
    build_hierarchy,
    check_convexity,
    minimize_objective,
    objective,
    saturation_bound,
)
from .rates import FitReport, PilotSeries, RateModel, fit_rate, validate_rate
from .selection import select_models
from .stats import ModelStats, PilotMatrix, pilot_stats, replicate_mse

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "ConvexityCertificate",
    "ConvexityError",
    "DegenerateHierarchyError",
    "FitReport",
    "Hierarchy",
    "InfeasibleBudgetError",
    "ModelStats",
    "ObjectiveContext",
    "OrderingError",
    "PilotMatrix",
    "PilotSeries",
    "RateModel",
    "TrainableSpec",
    "TrainingPlan",
    "Violation",
    "analytic_mse",
    "build_hierarchy",
    "check_convexity",
    "check_ordering",
    "estimator_variance",
    "fit_rate",
    "minimize_objective",
    "objective",
    "optimal_allocation",
    "pilot_stats",
    "reorder_models",
    "replicate_mse",
    "saturation_bound",
    "select_models",
    "validate_rate",
]

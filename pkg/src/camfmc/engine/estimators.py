"""MC, MFMC and context-aware MFMC estimates on a shared sample stream."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..allocate import (
    Allocation,
    Hierarchy,
    analytic_mse,
    check_ordering,
    optimal_allocation,
    reorder_models,
)
from ..budget import TrainingPlan
from ..stats import PilotMatrix, pilot_stats
from .ledger import BudgetLedger
from .models import EvaluationError
from .sampling import check_bounds, derive_seed, draw_uniform

__all__ = [
    "MFMCResult",
    "CAMFMCResult",
    "evaluate",
    "mc_estimate",
    "mfmc_estimate",
    "run_ca_mfmc",
    "STATS_SOURCES",
]

logger = logging.getLogger(__name__)

# Rows per block. Fixed so that sums, and hence estimates, do not depend on
# how evaluation is scheduled.
CHUNK_SIZE = 1 << 15

STATS_SOURCES = ("pilot", "exact", "predicted")


def _model_cost(model) -> float:
    cost = getattr(model, "cost", None)
    if cost is None:
        raise EvaluationError(f"{model.label}: evaluation cost unknown; configure or measure it first")
    return float(cost)


def _resolve_bounds(models, bounds):
    if bounds is not None:
        return check_bounds(bounds)
    d = getattr(models[0], "dimension", None)
    if d is None:
        raise ValueError("bounds are required when the model dimension is unknown")
    return check_bounds(np.tile([0.0, 1.0], (d, 1)))


def _rows(seed, bounds, start, stop):
    u = draw_uniform(seed, start, stop, bounds.shape[0])
    return bounds[:, 0] + (bounds[:, 1] - bounds[:, 0]) * u


def evaluate(model, inputs, ledger: BudgetLedger | None = None) -> np.ndarray:
    """Evaluate ``model`` on ``inputs`` and charge ``m * w`` to ``ledger``.

    The charge is checked before the model runs, so an over-budget request
    evaluates nothing.
    """
    x = np.asarray(inputs, dtype=float)
    m = x.shape[0]
    if m == 0:
        return np.empty(0)
    if ledger is not None:
        ledger.check_sampling(m * _model_cost(model), f"{m} evaluations of {model.label}")
    y = np.asarray(model.evaluate(x), dtype=float)
    if y.shape != (m,):
        raise EvaluationError(f"{model.label}: expected {m} outputs, got shape {y.shape}")
    if ledger is not None:
        ledger.charge_sampling(model.label, m, _model_cost(model))
    return y


@dataclass
class MFMCResult:
    estimate: float
    labels: list
    counts: list
    coefficients: list
    # mean of model j over its first m_j samples
    means: list
    # mean of model j over the first m_{j-1} samples (j >= 1)
    prefix_means: list
    ledger: BudgetLedger

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "labels": list(self.labels),
            "counts": list(self.counts),
            "coefficients": list(self.coefficients),
            "means": list(self.means),
            "prefix_means": list(self.prefix_means),
            "ledger": self.ledger.to_dict(),
        }


def _check_counts(counts, n_models):
    if len(counts) != n_models:
        raise ValueError(f"{len(counts)} counts for {n_models} models")
    if counts[0] < 1:
        raise ValueError("m_0 must be at least 1")
    if any(b < a for a, b in zip(counts, counts[1:])):
        raise ValueError(f"counts must be non-decreasing, got {list(counts)}")


def _attempt(task):
    model, x = task
    try:
        return model.evaluate(x), None
    except EvaluationError as exc:
        return None, exc


def mfmc_estimate(
    models,
    allocation: Allocation,
    seed: int,
    bounds=None,
    ledger: BudgetLedger | None = None,
    workers: int = 1,
) -> MFMCResult:
    """MFMC estimate ``E_0 + sum_j alpha_j (E_{m_j}^{(j)} - E_{m_{j-1}}^{(j)})``.

    Model ``j`` is evaluated on the first ``m_j`` inputs of the stream for
    ``seed``. With ``workers > 1`` the models of one block are evaluated
    concurrently; sums are always reduced in sample order.
    """
    models = list(models)
    counts = [int(c) for c in allocation.counts]
    alphas = [float(a) for a in allocation.coefficients]
    _check_counts(counts, len(models))
    if len(alphas) != len(models) - 1:
        raise ValueError(f"{len(alphas)} coefficients for {len(models)} models")
    b = _resolve_bounds(models, bounds)
    if ledger is None:
        ledger = BudgetLedger(math.inf)
    costs = [_model_cost(m) for m in models]
    ledger.check_sampling(math.fsum(m * w for m, w in zip(counts, costs)), "MFMC sampling")

    full = [[] for _ in models]
    prev = [[] for _ in models]
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for start in range(0, counts[-1], CHUNK_SIZE):
            stop = min(start + CHUNK_SIZE, counts[-1])
            x = _rows(seed, b, start, stop)
            active = [j for j in range(len(models)) if counts[j] > start]
            tasks = [(models[j], x[: min(stop, counts[j]) - start]) for j in active]
            if pool is None:
                outs = []
                for task in tasks:
                    outs.append(_attempt(task))
                    if outs[-1][1] is not None:
                        break
            else:
                outs = list(pool.map(_attempt, tasks))
            # charge every evaluation that completed before the first failure
            for j, (m, xi), (y, exc) in zip(active, tasks, outs):
                if exc is not None:
                    index = None if exc.index is None else exc.index + start
                    raise type(exc)(exc.detail, index) from exc
                y = np.asarray(y, dtype=float)
                if y.shape != (xi.shape[0],):
                    raise EvaluationError(f"{m.label}: expected {xi.shape[0]} outputs")
                ledger.charge_sampling(m.label, xi.shape[0], costs[j])
                full[j].append(float(np.sum(y)))
                if j > 0 and counts[j - 1] > start:
                    prev[j].append(float(np.sum(y[: min(stop, counts[j - 1]) - start])))
    finally:
        if pool is not None:
            pool.shutdown()

    means = [math.fsum(full[j]) / counts[j] for j in range(len(models))]
    prefix = [math.fsum(prev[j]) / counts[j - 1] for j in range(1, len(models))]
    est = means[0]
    for j in range(1, len(models)):
        est += alphas[j - 1] * (means[j] - prefix[j - 1])
    return MFMCResult(
        estimate=est,
        labels=[m.label for m in models],
        counts=counts,
        coefficients=alphas,
        means=means,
        prefix_means=prefix,
        ledger=ledger,
    )


def mc_estimate(model, m: int, seed: int, bounds=None, ledger: BudgetLedger | None = None) -> float:
    """Plain Monte Carlo mean over the first ``m`` inputs of the stream."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    alloc = Allocation((int(m),), (), float("nan"), float("nan"), float("nan"))
    return mfmc_estimate([model], alloc, seed, bounds, ledger).estimate


@dataclass
class CAMFMCResult:
    estimate: float
    labels: list
    allocation: Allocation
    realized_stats: list
    predicted_stats: dict
    analytic_mse: float
    predicted_mse: float
    training: dict
    ledger: BudgetLedger
    stats_source: str
    reordered: bool = False
    dropped: list = field(default_factory=list)
    mfmc: MFMCResult | None = None

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "order": list(self.labels),
            "allocation": self.allocation.to_dict(),
            "stats_source": self.stats_source,
            "realized_stats": {
                l: s.to_dict() for l, s in zip(self.labels, self.realized_stats)
            },
            "predicted_stats": {l: s.to_dict() for l, s in self.predicted_stats.items()},
            "analytic_mse": self.analytic_mse,
            "predicted_analytic_mse": self.predicted_mse,
            "training": dict(self.training),
            "reordered": self.reordered,
            "dropped": list(self.dropped),
            "means": dict(zip(self.mfmc.labels, self.mfmc.means)) if self.mfmc else {},
            "ledger": self.ledger.to_dict(),
        }


def _measure_stats(models, seed, bounds, n_pilot, ledger):
    x = _rows(seed, bounds, 0, n_pilot)
    cols = []
    for m in models:
        cols.append(np.asarray(m.evaluate(x), dtype=float))
    costs = [_model_cost(m) for m in models]
    for w in costs:
        ledger.charge_pilot_evaluations(n_pilot, w)
    return pilot_stats(PilotMatrix(x, np.column_stack(cols)), costs)


def run_ca_mfmc(
    plan: TrainingPlan,
    high,
    statics: dict,
    trainables: dict,
    seed: int,
    bounds=None,
    stats_source: str = "pilot",
    pilot_samples: int = 200,
    charge_pilot: bool = False,
    workers: int = 1,
    ledger: BudgetLedger | None = None,
) -> CAMFMCResult:
    """Train, allocate and run the context-aware MFMC estimator.

    Parameters
    ----------
    plan : TrainingPlan
        Output of :func:`camfmc.budget.build_hierarchy`.
    high : model handle
        High-fidelity model.
    statics : dict
        Label to model handle for pre-existing low-fidelity models.
    trainables : dict
        Label to :class:`~camfmc.budget.TrainableSpec`; each spec's
        ``trainer(n, seed)`` returns the trained model handle.
    stats_source : {"pilot", "exact", "predicted"}
        Where the allocation takes ``(w, rho, sigma)`` from: a fresh pilot
        run on an independent stream, the models' ``exact_stats()``, or the
        plan's rate-bound predictions.
    charge_pilot : bool
        Count pilot evaluations against the budget.

    Raises
    ------
    InfeasibleBudgetError
        If the residual budget cannot pay for one high-fidelity sample.
    """
    if stats_source not in STATS_SOURCES:
        raise ValueError(f"stats_source must be one of {STATS_SOURCES}")
    ledger = ledger if ledger is not None else BudgetLedger(plan.budget, charge_pilot=charge_pilot)

    models = {"f0": high, **statics}
    training = {}
    for idx, step in enumerate(plan.steps):
        spec = trainables[step.label]
        if spec.trainer is None:
            raise ValueError(f"{step.label}: no trainer hook configured")
        ledger.charge_training(step.label, step.n_feasible)
        models[step.label] = spec.trainer(step.n_feasible, derive_seed(seed, "train", idx))
        training[step.label] = step.n_feasible
        logger.info("trained %s on %d samples", step.label, step.n_feasible)

    labels = list(plan.labels)
    predicted = dict(zip(plan.labels, plan.stats))
    handles = [models[l] for l in labels]
    b = _resolve_bounds(handles, bounds)
    if stats_source == "predicted":
        realized = list(plan.stats)
    elif stats_source == "exact":
        realized = [m.exact_stats() for m in handles]
    else:
        realized = _measure_stats(handles, derive_seed(seed, "pilot"), b, pilot_samples, ledger)

    reordered, dropped = False, []
    if check_ordering(realized):
        hier, lost = reorder_models(realized, labels)
        dropped = [l for l, _ in lost]
        reordered = True
        logger.warning(
            "realized statistics violate the MFMC ordering; using %s", ", ".join(hier.labels)
        )
    else:
        hier = Hierarchy(tuple(realized), tuple(labels))

    overhead = ledger.spent_training + (ledger.spent_pilot if charge_pilot else 0.0)
    alloc = optimal_allocation(hier, plan.budget - overhead)
    run = mfmc_estimate(
        [models[l] for l in hier.labels],
        alloc,
        derive_seed(seed, "samples"),
        b,
        ledger,
        workers,
    )
    return CAMFMCResult(
        estimate=run.estimate,
        labels=list(hier.labels),
        allocation=alloc,
        realized_stats=list(hier.stats),
        predicted_stats=predicted,
        analytic_mse=analytic_mse(hier, plan.budget, overhead),
        predicted_mse=analytic_mse(plan.stats, plan.budget, plan.training_spent),
        training=training,
        ledger=ledger,
        stats_source=stats_source,
        reordered=reordered,
        dropped=dropped,
        mfmc=run,
    )

"""Rank subsets of candidate low-fidelity models by analytic MSE."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

from .allocate import analytic_mse, check_ordering
from .budget import TrainableSpec, build_hierarchy
from .io import write_csv
from .stats import ModelStats

__all__ = ["SubsetCurve", "SelectionResult", "select_models", "subset_name"]


def subset_name(labels) -> str:
    return "+".join(labels)


@dataclass
class SubsetCurve:
    labels: tuple
    budgets: list
    mse: list  # analytic MSE per budget; None where the budget is infeasible
    bound: list  # optimized training bound per budget (None without trainables)
    training: list  # {label: n} per budget
    notes: list = field(default_factory=list)

    @property
    def name(self) -> str:
        return subset_name(self.labels)


@dataclass
class SelectionResult:
    ranked: list  # SubsetCurve, best first
    excluded: list  # (subset name, reason)

    def rows(self):
        """``(subset, budget, analytic_mse)`` rows in rank order."""
        for curve in self.ranked:
            for p, mse in zip(curve.budgets, curve.mse):
                yield curve.name, p, mse

    def to_csv(self, path) -> None:
        write_csv(path, ["subset", "budget", "analytic_mse"], self.rows())

    def to_dict(self) -> dict:
        return {
            "ranking": [
                {
                    "rank": i + 1,
                    "subset": c.name,
                    "models": list(c.labels),
                    "mse_at_largest_budget": c.mse[-1],
                    "bound_at_largest_budget": c.bound[-1],
                    "training_at_largest_budget": c.training[-1],
                    "notes": list(c.notes),
                }
                for i, c in enumerate(self.ranked)
            ],
            "excluded": [{"subset": s, "reason": r} for s, r in self.excluded],
        }


def _curve(high, labels, statics, trainables, budgets):
    mses, bounds, training, notes = [], [], [], []
    for p in budgets:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            plan = build_hierarchy(high, statics, trainables, p)
        for w in caught:
            notes.append(f"p={p:g}: {w.message}")
        if plan.dropped:
            return None, (
                f"ordering violated at p={p:g}; would drop {', '.join(plan.dropped)}"
            )
        if plan.unplaced or not plan.residual_budget > 0:
            mses.append(None)
        else:
            mses.append(analytic_mse(plan.stats, p, plan.training_spent))
        bounds.append(plan.bound_value)
        training.append({s.label: s.n_feasible for s in plan.steps})
    return SubsetCurve(tuple(labels), list(budgets), mses, bounds, training, notes), None


def select_models(candidates, budgets) -> SelectionResult:
    """Evaluate every subset of low-fidelity candidates over a budget grid.

    Parameters
    ----------
    candidates : list of (label, ModelStats or TrainableSpec)
        The first entry is the high-fidelity model (``ModelStats`` with cost
        1 and correlation 1). Static models enter with their statistics;
        trainable models with the training size that minimizes their
        context-aware bound at each budget.
    budgets : list of float
        Budgets in high-fidelity evaluation units.

    Returns
    -------
    SelectionResult
        Admissible subsets ranked by analytic MSE at the largest budget
        (infeasible values last), plus excluded subsets with reasons.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("the high-fidelity model is required")
    hf_label, high = candidates[0]
    if not isinstance(high, ModelStats):
        raise TypeError("the high-fidelity candidate must be given as ModelStats")
    budgets = sorted(float(p) for p in budgets)
    if not budgets or budgets[0] <= 0:
        raise ValueError("budgets must be positive")

    excluded = []
    pool = []
    for label, item in candidates[1:]:
        if isinstance(item, ModelStats) and abs(item.correlation) >= 1.0:
            excluded.append((subset_name([hf_label, label]), "correlation 1 is degenerate"))
        else:
            pool.append((label, item))

    curves = []
    for r in range(len(pool) + 1):
        for combo in itertools.combinations(pool, r):
            labels = [hf_label] + [l for l, _ in combo]
            name = subset_name(labels)
            statics = [(l, s) for l, s in combo if isinstance(s, ModelStats)]
            trains = [s for _, s in combo if isinstance(s, TrainableSpec)]
            static_violations = check_ordering(
                [high] + [s for _, s in sorted(statics, key=lambda p: -abs(p[1].correlation))]
            )
            if static_violations:
                excluded.append((name, static_violations[0].message))
                continue
            curve, reason = _curve(high, labels, statics, trains, budgets)
            if curve is None:
                excluded.append((name, reason))
            else:
                curves.append(curve)

    def key(c):
        last = c.mse[-1]
        return (last is None, math.inf if last is None else last)

    curves.sort(key=key)  # stable: ties keep enumeration order
    return SelectionResult(curves, excluded)

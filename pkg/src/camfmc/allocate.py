"""Static MFMC machinery: ordering checks, optimal sample allocation and
the analytic mean-squared error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Violation",
    "OrderingError",
    "InfeasibleBudgetError",
    "DegenerateHierarchyError",
    "Hierarchy",
    "Allocation",
    "check_ordering",
    "reorder_models",
    "optimal_allocation",
    "analytic_mse",
    "mse_factor",
    "estimator_variance",
]


class OrderingError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(v.message for v in self.violations))


class InfeasibleBudgetError(ValueError):
    pass


class DegenerateHierarchyError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    index: int
    kind: str  # "high_fidelity" | "correlation" | "cost_ratio"
    message: str


def _rho2_padded(stats):
    # rho_{k+1} = 0 closes the telescoping sums
    return np.array([s.rho2 for s in stats] + [0.0])


def check_ordering(stats) -> list[Violation]:
    """Check the MFMC ordering conditions.

    ``1 = |rho_0| > |rho_1| > ... > |rho_k|`` and, for ``j = 1..k``,
    ``w_{j-1} / w_j > (rho_{j-1}^2 - rho_j^2) / (rho_j^2 - rho_{j+1}^2)``.
    An empty list means the ordering holds.
    """
    stats = list(stats)
    out = []
    if not stats:
        return [Violation(0, "high_fidelity", "hierarchy is empty")]
    hf = stats[0]
    if hf.cost != 1.0 or hf.correlation != 1.0:
        out.append(
            Violation(0, "high_fidelity", "model 0 must have cost 1 and correlation 1")
        )
    r2 = _rho2_padded(stats)
    abs_rho = [abs(s.correlation) for s in stats]
    strict = [True] * len(stats)
    for j in range(1, len(stats)):
        if not abs_rho[j - 1] > abs_rho[j]:
            strict[j] = False
            out.append(
                Violation(j, "correlation", f"non-strict correlation ordering at j={j}")
            )
    for j in range(1, len(stats)):
        nxt_ok = j + 1 >= len(stats) or strict[j + 1]
        if not (strict[j] and nxt_ok):
            continue
        lhs = stats[j - 1].cost * (r2[j] - r2[j + 1])
        rhs = stats[j].cost * (r2[j - 1] - r2[j])
        if not lhs > rhs:
            out.append(
                Violation(
                    j,
                    "cost_ratio",
                    f"cost-ratio condition fails at j={j}: "
                    f"w_{j - 1}/w_{j} = {stats[j - 1].cost / stats[j].cost:.6g} <= "
                    f"{(r2[j - 1] - r2[j]) / (r2[j] - r2[j + 1]):.6g}",
                )
            )
    return sorted(out, key=lambda v: v.index)


@dataclass(frozen=True)
class Hierarchy:
    """Ordered models, high-fidelity first. The ordering is checked on
    construction."""

    stats: tuple
    labels: tuple = ()

    def __post_init__(self):
        stats = tuple(self.stats)
        labels = tuple(self.labels) or tuple(f"f{j}" for j in range(len(stats)))
        if len(labels) != len(stats):
            raise ValueError("one label per model is required")
        violations = check_ordering(stats)
        if violations:
            raise OrderingError(violations)
        object.__setattr__(self, "stats", stats)
        object.__setattr__(self, "labels", labels)

    @property
    def k(self) -> int:
        return len(self.stats) - 1

    @property
    def sigma0(self) -> float:
        return self.stats[0].stddev


def reorder_models(stats, labels=None):
    """Sort low-fidelity models by decreasing ``|rho|`` and greedily drop
    models until the ordering conditions hold.

    At each round the model at the lowest violated index is removed.

    Returns
    -------
    (Hierarchy, list of (label, ModelStats))
        The surviving hierarchy and the dropped models in drop order.
    """
    stats = list(stats)
    labels = list(labels) if labels else [f"f{j}" for j in range(len(stats))]
    lo = sorted(
        zip(labels[1:], stats[1:]),
        key=lambda p: -abs(p[1].correlation),
    )
    kept = [(labels[0], stats[0])] + lo
    dropped = []
    while True:
        violations = [v for v in check_ordering([s for _, s in kept]) if v.index > 0]
        if not violations:
            break
        j = violations[0].index
        dropped.append(kept.pop(j))
    hier = Hierarchy(tuple(s for _, s in kept), tuple(l for l, _ in kept))
    return hier, dropped


def mse_factor(stats) -> float:
    """``(sum_j sqrt(w_j (rho_j^2 - rho_{j+1}^2)))^2``; the MSE is this
    times ``sigma_0^2 / p``."""
    r2 = _rho2_padded(stats)
    w = np.array([s.cost for s in stats])
    terms = np.sqrt(w * np.maximum(r2[:-1] - r2[1:], 0.0))
    return float(math.fsum(terms)) ** 2


def analytic_mse(hierarchy, budget: float, training_spent: float = 0.0) -> float:
    """MSE of the optimally allocated MFMC estimator.

    With ``training_spent > 0`` the sampling budget is reduced
    accordingly, giving the MSE of the context-aware estimator.
    """
    stats = hierarchy.stats if isinstance(hierarchy, Hierarchy) else list(hierarchy)
    if not budget > training_spent:
        raise InfeasibleBudgetError(
            f"budget {budget} must exceed training spend {training_spent}"
        )
    sigma0 = stats[0].stddev
    return sigma0**2 / (budget - training_spent) * mse_factor(stats)


def estimator_variance(stats, counts, coefficients) -> float:
    """Variance of the MFMC estimator for given (real) counts and
    coefficients."""
    s0 = stats[0].stddev
    var = s0**2 / counts[0]
    for j in range(1, len(stats)):
        sj, rj, aj = stats[j].stddev, stats[j].correlation, coefficients[j - 1]
        var += (1.0 / counts[j - 1] - 1.0 / counts[j]) * (
            aj**2 * sj**2 - 2.0 * aj * rj * s0 * sj
        )
    return var


@dataclass(frozen=True)
class Allocation:
    counts: tuple
    coefficients: tuple
    analytic_mse: float
    budget: float
    realized_cost: float
    real_counts: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "counts": list(self.counts),
            "coefficients": list(self.coefficients),
            "analytic_mse": self.analytic_mse,
            "budget": self.budget,
            "realized_cost": self.realized_cost,
            "real_counts": list(self.real_counts),
        }


def optimal_allocation(hierarchy: Hierarchy, budget: float) -> Allocation:
    """Closed-form MFMC sample allocation for a sampling budget.

    Coefficients are ``alpha_j = rho_j sigma_0 / sigma_j`` and the real
    counts are ``m_j = m_0 r_j`` with
    ``r_j = sqrt(w_0 (rho_j^2 - rho_{j+1}^2) / (w_j (1 - rho_1^2)))`` and
    ``m_0 = budget / sum_j w_j r_j``.

    Counts are integerized without exceeding the budget: ``m_0`` is
    floored (at least 1), the others floored and clamped to be
    non-decreasing, and leftover budget goes to the last model. The
    reported MSE uses the real-valued counts.
    """
    stats = hierarchy.stats
    s0 = stats[0].stddev
    if s0 == 0:
        raise DegenerateHierarchyError("high-fidelity output has zero variance")
    r2 = _rho2_padded(stats)
    if hierarchy.k >= 1 and r2[1] >= 1.0:
        raise DegenerateHierarchyError(
            "rho_1 = 1: low-fidelity model is a zero-variance control variate"
        )
    for j in range(1, len(stats)):
        if stats[j].stddev == 0:
            raise DegenerateHierarchyError(f"model {j} has zero variance")
    w = np.array([s.cost for s in stats])
    ratios = np.sqrt(w[0] * (r2[:-1] - r2[1:]) / (w * (1.0 - r2[1])))
    m_real = budget / float(w @ ratios) * ratios
    if not m_real[0] >= 1.0:
        raise InfeasibleBudgetError(
            f"budget {budget:g} is too small: needs at least {float(w @ ratios):.6g} "
            "for one high-fidelity sample"
        )
    alphas = tuple(
        stats[j].correlation * s0 / stats[j].stddev for j in range(1, len(stats))
    )

    m = [max(1, math.floor(m_real[0]))]
    for j in range(1, len(stats)):
        m.append(max(math.floor(m_real[j]), m[-1]))

    def total(counts):
        return math.fsum(mj * wj for mj, wj in zip(counts, w))

    extra = math.floor((budget - total(m)) / w[-1])
    if extra > 0:
        m[-1] += extra
    # guard against round-off in the floor above
    floor_last = m[-2] if len(m) > 1 else 1
    while total(m) > budget and m[-1] > floor_last:
        m[-1] -= 1
    cost = total(m)

    return Allocation(
        counts=tuple(int(x) for x in m),
        coefficients=alphas,
        analytic_mse=estimator_variance(stats, m_real, alphas),
        budget=float(budget),
        realized_cost=cost,
        real_counts=tuple(float(x) for x in m_real),
    )

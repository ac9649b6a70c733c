"""Context-aware split of a budget between training and sampling.

For the ``j``-th trainable low-fidelity model the number of high-fidelity
training samples ``n`` minimizes

    u_j(n) = (kappa + prev_cost * c_a * r_a(n) + c_c * r_c(n)) / (p - n),

on ``[1, p - 1]``, where ``kappa`` collects the bound contributions of the
models already placed, ``prev_cost`` is the cost of the preceding model in
the hierarchy and ``p`` the budget left after earlier training. Budgets are
in units of one high-fidelity evaluation.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import bisect

from .allocate import Hierarchy, check_ordering, reorder_models
from .rates import Family, RateModel, Role, validate_rate
from .stats import ModelStats

__all__ = [
    "TrainableSpec",
    "ObjectiveContext",
    "ConvexityCertificate",
    "MinimizeResult",
    "PlanStep",
    "TrainingPlan",
    "ConvexityError",
    "InfeasibleIntervalError",
    "objective",
    "objective_deriv",
    "check_convexity",
    "minimize_objective",
    "exhaustive_minimize",
    "saturation_bound",
    "build_hierarchy",
]

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
CONVEXITY_GRID_POINTS = 10_000


class ConvexityError(RuntimeError):
    pass


class InfeasibleIntervalError(ValueError):
    pass


@dataclass(frozen=True)
class TrainableSpec:
    """A low-fidelity model whose accuracy and cost depend on its training
    set size.

    ``feasible_n`` optionally lists the training sizes the model can
    actually realize (e.g. sparse-grid cardinalities); ``trainer`` is an
    optional hook ``(n, seed) -> model`` used by the execution engine.
    """

    label: str
    accuracy: RateModel
    cost: RateModel
    min_train: int = 1
    feasible_n: Optional[tuple] = None
    trainer: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.accuracy.role is not Role.ACCURACY:
            raise ValueError(f"{self.label}: accuracy rate must have role 'accuracy'")
        if self.cost.role is not Role.COST:
            raise ValueError(f"{self.label}: cost rate must have role 'cost'")
        for rate in (self.accuracy, self.cost):
            problem = validate_rate(rate)
            if problem:
                raise ValueError(f"{self.label}: {rate.role.value} rate: {problem}")
        if int(self.min_train) < 1:
            raise ValueError(f"{self.label}: min_train must be >= 1")
        object.__setattr__(self, "min_train", int(self.min_train))
        if self.feasible_n is not None:
            feas = tuple(sorted({int(v) for v in self.feasible_n}))
            if not feas or feas[0] < 1:
                raise ValueError(f"{self.label}: feasible_n must hold positive integers")
            object.__setattr__(self, "feasible_n", feas)

    def snap(self, n: int) -> int:
        """Nearest feasible training size; ties go to the larger size."""
        if self.feasible_n is None:
            return int(n)
        feas = np.asarray(self.feasible_n)
        dist = np.abs(feas - n)
        best = np.flatnonzero(dist == dist.min())
        return int(feas[best[-1]])

    def predicted_gap(self, n) -> float:
        return float(self.accuracy(n))

    def predicted_cost(self, n) -> float:
        return float(self.cost(n))


@dataclass(frozen=True)
class ObjectiveContext:
    kappa: float
    prev_cost: float
    remaining_budget: float
    spec: TrainableSpec

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")
        if not self.prev_cost > 0:
            raise ValueError(f"prev_cost must be positive, got {self.prev_cost}")
        if not self.remaining_budget > 2:
            raise InfeasibleIntervalError(
                f"remaining budget {self.remaining_budget} leaves no room for "
                "training and sampling"
            )

    @property
    def c_hat_a(self) -> float:
        return self.prev_cost * self.spec.accuracy.scale

    @property
    def lo(self) -> int:
        return max(1, self.spec.min_train)

    @property
    def hi(self) -> int:
        """Largest admissible integer training size."""
        return math.floor(self.remaining_budget) - 1

    def h(self, n, order: int = 0):
        """Numerator ``kappa + c_hat_a r_a(n) + c_c r_c(n)`` or its derivative."""
        acc, cost = self.spec.accuracy, self.spec.cost
        if order == 0:
            return self.kappa + self.prev_cost * acc(n) + cost(n)
        return self.prev_cost * acc.deriv(n, order) + cost.deriv(n, order)


def _as_array(n):
    return np.asarray(n, dtype=float)


def objective(ctx: ObjectiveContext, n):
    """Evaluate ``u_j`` at ``n`` (scalar or array) in ``[1, p - 1]``."""
    arr = _as_array(n)
    p = ctx.remaining_budget
    if np.any(arr < 1) or np.any(arr > p - 1):
        raise ValueError(f"n must lie in [1, {p - 1:g}], got {n!r}")
    out = ctx.h(arr) / (p - arr)
    return float(out) if out.ndim == 0 else out


def objective_deriv(ctx: ObjectiveContext, n):
    """``u_j'(n) = ((p - n) h'(n) + h(n)) / (p - n)^2``."""
    arr = _as_array(n)
    p = ctx.remaining_budget
    out = ((p - arr) * ctx.h(arr, 1) + ctx.h(arr)) / (p - arr) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ConvexityCertificate:
    """Result of checking ``c_hat_a r_a''(n) + c_c r_c''(n) > 0``.

    ``method`` is ``"cost_convex"`` (both terms non-negative everywhere),
    ``"endpoint"`` (sign change is at most one and the check at the upper
    end suffices) or ``"grid"`` (geometric grid scan).
    """

    ok: bool
    lo: float
    hi: float
    method: str
    failing_n: Optional[float] = None
    min_value: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "interval": [self.lo, self.hi],
            "method": self.method,
            "failing_n": self.failing_n,
            "min_value": self.min_value,
        }


def check_convexity(ctx: ObjectiveContext, lo: float, hi: float) -> ConvexityCertificate:
    """Certify that the numerator of the objective is strictly convex on
    ``[lo, hi]``."""
    if not (1 <= lo < hi):
        raise ValueError(f"need 1 <= lo < hi, got [{lo}, {hi}]")
    acc, cost = ctx.spec.accuracy, ctx.spec.cost
    concave_cost = cost.family is Family.ALGEBRAIC and cost.exponent < 1
    if not concave_cost:
        # accuracy'' > 0 always; cost'' >= 0 for exponential or beta >= 1
        return ConvexityCertificate(True, lo, hi, "cost_convex", None, None)

    if acc.family is Family.ALGEBRAIC:
        # |cost''| / accuracy'' grows like n^(alpha + beta): a single sign
        # change at most, so the infimum sits at hi.
        a, b = acc.exponent, cost.exponent
        val = float(ctx.h(hi, 2))
        if val > 0:
            return ConvexityCertificate(True, lo, hi, "endpoint", None, val)
        cross = (ctx.c_hat_a * a * (a + 1.0) / (cost.scale * b * (1.0 - b))) ** (
            1.0 / (a + b)
        )
        return ConvexityCertificate(False, lo, hi, "endpoint", max(lo, cross), val)

    grid = np.geomspace(lo, hi, CONVEXITY_GRID_POINTS)
    vals = ctx.h(grid, 2)
    bad = np.flatnonzero(~(vals > 0))
    if bad.size:
        return ConvexityCertificate(
            False, lo, hi, "grid", float(grid[bad[0]]), float(vals.min())
        )
    return ConvexityCertificate(True, lo, hi, "grid", None, float(vals.min()))


def _golden_section(f, a: float, b: float, tol: float):
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    n_eval = 2
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        n_eval += 1
    return 0.5 * (a + b), (a, b), n_eval


@dataclass(frozen=True)
class MinimizeResult:
    n_star: int
    n_feasible: int
    objective_value: float
    continuous_minimizer: Optional[float]
    case: str  # left_boundary | right_boundary | interior | exhaustive
    convexity: ConvexityCertificate
    evaluations: int

    def to_dict(self) -> dict:
        return {
            "n_star": self.n_star,
            "n_feasible": self.n_feasible,
            "objective_value": self.objective_value,
            "continuous_minimizer": self.continuous_minimizer,
            "case": self.case,
            "convexity_certificate": self.convexity.to_dict(),
            "evaluations": self.evaluations,
        }


def exhaustive_minimize(ctx: ObjectiveContext, chunk: int = 1 << 20) -> tuple[int, float]:
    """Integer argmin of the objective by evaluating every admissible n;
    ties go to the smaller n."""
    lo, hi = ctx.lo, ctx.hi
    if hi < lo:
        raise InfeasibleIntervalError(f"empty interval [{lo}, {hi}]")
    best_n, best_v = lo, math.inf
    for start in range(lo, hi + 1, chunk):
        n = np.arange(start, min(start + chunk, hi + 1), dtype=float)
        v = objective(ctx, n)
        i = int(np.argmin(v))
        if v[i] < best_v:
            best_n, best_v = int(n[i]), float(v[i])
    return best_n, best_v


def minimize_objective(ctx: ObjectiveContext, allow_fallback: bool = True) -> MinimizeResult:
    """Integer minimizer of the objective on ``[lo, floor(p) - 1]``.

    When the convexity certificate holds the objective is unimodal, so a
    golden-section search locates the continuous minimizer and the integers
    around it (plus both endpoints) are compared directly. Otherwise every
    integer is evaluated, with a warning.
    """
    lo, hi = ctx.lo, ctx.hi
    if hi < lo:
        raise InfeasibleIntervalError(
            f"{ctx.spec.label}: empty training interval [{lo}, {hi}] for "
            f"remaining budget {ctx.remaining_budget:g}"
        )
    p = ctx.remaining_budget
    c_hi = p - 1.0
    if hi == lo or c_hi <= lo:
        cert = ConvexityCertificate(True, lo, c_hi, "trivial")
        v = float(objective(ctx, lo))
        return MinimizeResult(lo, ctx.spec.snap(lo), v, float(lo), "left_boundary", cert, 1)

    cert = check_convexity(ctx, lo, c_hi)
    if not cert.ok:
        if not allow_fallback:
            raise ConvexityError(
                f"{ctx.spec.label}: convexity fails at n={cert.failing_n:g}"
            )
        warnings.warn(
            f"{ctx.spec.label}: convexity condition fails at n={cert.failing_n:g}; "
            "falling back to exhaustive search (uniqueness not guaranteed)",
            RuntimeWarning,
            stacklevel=2,
        )
        n_star, v = exhaustive_minimize(ctx)
        return MinimizeResult(
            n_star, ctx.spec.snap(n_star), v, None, "exhaustive", cert, hi - lo + 1
        )

    if objective_deriv(ctx, lo) >= 0:
        case = "left_boundary"
    elif objective_deriv(ctx, c_hi) <= 0:
        case = "right_boundary"
    else:
        case = "interior"

    f = lambda x: float(ctx.h(x) / (p - x))
    x_star, _, n_eval = _golden_section(f, float(lo), c_hi, tol=1e-9 * max(1.0, c_hi))
    cand = {lo, hi}
    cand.update(range(math.floor(x_star) - 1, math.ceil(x_star) + 2))
    cand = np.array(sorted(c for c in cand if lo <= c <= hi), dtype=float)
    vals = objective(ctx, cand)
    i = int(np.argmin(vals))
    n_star = int(cand[i])
    return MinimizeResult(
        n_star,
        ctx.spec.snap(n_star),
        float(vals[i]),
        x_star,
        case,
        cert,
        n_eval + cand.size,
    )


def saturation_bound(spec: TrainableSpec, prev_cost: float = 1.0) -> Optional[float]:
    """Budget-independent bound on the optimal training size.

    Returns the root ``n_bar`` of ``prev_cost c_a r_a'(n) + c_c r_c'(n)``,
    or ``None`` when that derivative does not change sign on
    ``[1e-12, 1e12]`` (either the optimum is always at the left end, or the
    numerator keeps decreasing).
    """

    def g(n):
        with np.errstate(over="ignore", under="ignore"):
            return prev_cost * spec.accuracy.deriv(n, 1) + spec.cost.deriv(n, 1)

    a = 1.0
    ga = g(a)
    if ga == 0:
        return a
    if ga < 0:
        b = 2.0
        while g(b) < 0:
            a, b = b, 2.0 * b
            if b > 1e12:
                return None
    else:
        b = a
        a = 0.5
        while g(a) > 0:
            b, a = a, 0.5 * a
            if a < 1e-12:
                return None
    return float(bisect(g, a, b, xtol=1e-12, rtol=1e-13, maxiter=500))


@dataclass(frozen=True)
class PlanStep:
    label: str
    n_star: int
    n_feasible: int
    kappa_before: float
    kappa_after: float
    prev_cost: float
    budget_before: float
    budget_after: float
    result: MinimizeResult
    n_bar: Optional[float]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n_star": self.n_star,
            "n_feasible": self.n_feasible,
            "kappa_before": self.kappa_before,
            "kappa_after": self.kappa_after,
            "prev_cost": self.prev_cost,
            "budget_before": self.budget_before,
            "budget_after": self.budget_after,
            "diagnostics": {
                "continuous_minimizer": self.result.continuous_minimizer,
                "case": self.result.case,
                "objective_value": self.result.objective_value,
                "n_bar": self.n_bar,
                "convexity_certificate": self.result.convexity.to_dict(),
            },
        }


@dataclass
class TrainingPlan:
    budget: float
    high_fidelity: ModelStats
    steps: list
    labels: list  # final hierarchy order, high-fidelity first
    stats: list  # predicted stats in final order
    residual_budget: float
    dropped: list = field(default_factory=list)
    reordered: bool = False
    unplaced: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    bound_value: Optional[float] = None

    @property
    def training_spent(self) -> float:
        return self.budget - self.residual_budget

    @property
    def hierarchy(self) -> Hierarchy:
        return Hierarchy(tuple(self.stats), tuple(self.labels))

    def step(self, label: str) -> PlanStep:
        for s in self.steps:
            if s.label == label:
                return s
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "residual_budget": self.residual_budget,
            "training_spent": self.training_spent,
            "steps": [s.to_dict() for s in self.steps],
            "order": list(self.labels),
            "predicted_stats": {
                l: s.to_dict() for l, s in zip(self.labels, self.stats)
            },
            "dropped": list(self.dropped),
            "reordered": self.reordered,
            "unplaced": list(self.unplaced),
            "warnings": list(self.warnings),
            "bound_value": self.bound_value,
        }


def build_hierarchy(
    high_fi: ModelStats,
    statics,
    trainables,
    budget: float,
    allow_fallback: bool = True,
) -> TrainingPlan:
    """Sequentially choose training sizes for a hierarchy of models.

    Static models (``(label, ModelStats)`` pairs) come first, sorted by
    decreasing ``|rho|``, followed by the trainable models in the given
    order. Static models enter the running constants with their measured
    ``w`` and ``1 - rho^2``; trained models with their rate bounds at the
    chosen training size. Each training sample costs one high-fidelity
    evaluation.

    Predicted statistics of a trained model are ``rho^2 = 1 - c_a r_a(n)``
    and ``w = c_c r_c(n)``; its output standard deviation is taken equal to
    the high-fidelity one. If the predicted hierarchy violates the MFMC
    ordering, it is reordered and, if needed, pruned.
    """
    statics = sorted(statics, key=lambda p: -abs(p[1].correlation))
    labels = ["f0"]
    stats = [high_fi]
    kappa = 0.0
    prev_cost = 1.0
    for label, s in statics:
        kappa += prev_cost * (1.0 - s.rho2)
        prev_cost = s.cost
        labels.append(label)
        stats.append(s)

    remaining = float(budget)
    steps = []
    unplaced = []
    notes = []
    bound_value = None
    for idx, spec in enumerate(trainables):
        if remaining <= 2 or math.floor(remaining) - 1 < max(1, spec.min_train):
            unplaced = [t.label for t in trainables[idx:]]
            msg = (
                f"budget exhausted ({remaining:g} left) before placing "
                f"{', '.join(unplaced)}"
            )
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)
            break
        ctx = ObjectiveContext(kappa, prev_cost, remaining, spec)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = minimize_objective(ctx, allow_fallback=allow_fallback)
        for w in caught:
            notes.append(str(w.message))
            warnings.warn(w.message, w.category, stacklevel=2)
        n = res.n_feasible
        if n > ctx.hi:
            # a granularity table can point past the budget
            n = res.n_star
            notes.append(f"{spec.label}: feasible size {res.n_feasible} exceeds budget; using {n}")
        # Cauchy-Schwarz over the len(stats) + 1 terms of the MSE factor
        n_terms = len(stats) + 1
        bound_value = (n_terms * high_fi.variance) * float(objective(ctx, n))
        kappa_after = kappa + prev_cost * spec.predicted_gap(n)
        steps.append(
            PlanStep(
                label=spec.label,
                n_star=res.n_star,
                n_feasible=n,
                kappa_before=kappa,
                kappa_after=kappa_after,
                prev_cost=prev_cost,
                budget_before=remaining,
                budget_after=remaining - n,
                result=res,
                n_bar=saturation_bound(spec, prev_cost),
            )
        )
        logger.debug("placed %s with n=%d (remaining %g)", spec.label, n, remaining - n)
        kappa = kappa_after
        prev_cost = spec.predicted_cost(n)
        remaining -= n
        gap = min(spec.predicted_gap(n), 1.0)
        labels.append(spec.label)
        stats.append(ModelStats(prev_cost, math.sqrt(1.0 - gap), high_fi.stddev))

    dropped = []
    reordered = False
    if check_ordering(stats):
        hier, lost = reorder_models(stats, labels)
        dropped = [l for l, _ in lost]
        reordered = list(hier.labels) != [l for l in labels if l not in dropped]
        if reordered:
            notes.append(
                "predicted hierarchy violates the MFMC ordering; reordered to "
                + ", ".join(hier.labels)
            )
        labels, stats = list(hier.labels), list(hier.stats)

    return TrainingPlan(
        budget=float(budget),
        high_fidelity=high_fi,
        steps=steps,
        labels=labels,
        stats=stats,
        residual_budget=remaining,
        dropped=dropped,
        reordered=reordered,
        unplaced=unplaced,
        warnings=notes,
        bound_value=bound_value,
    )

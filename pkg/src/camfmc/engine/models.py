"""Model handles: built-in synthetic models and external-process models.

Every handle exposes ``label``, a per-evaluation ``cost`` in high-fidelity
units and ``evaluate(inputs) -> outputs`` for an ``(m, d)`` input array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..budget import TrainableSpec
from ..rates import RateModel
from ..stats import ModelStats

__all__ = [
    "EvaluationError",
    "SyntheticHigh",
    "SyntheticLowFi",
    "FunctionModel",
    "synthetic_high",
    "synthetic_lowfi_train",
    "synthetic_static",
    "synthetic_trainer",
]


class EvaluationError(RuntimeError):
    """A model failed to evaluate; ``index`` is the offending sample index
    within the request, or ``None`` if unknown."""

    def __init__(self, message: str, index: int | None = None):
        self.detail = message
        self.index = index
        suffix = "" if index is None else f" (sample {index})"
        super().__init__(message + suffix)


def _unit_coords(x: np.ndarray, bounds: np.ndarray | None) -> np.ndarray:
    if bounds is None:
        return x
    return (x - bounds[:, 0]) / (bounds[:, 1] - bounds[:, 0])


def synthetic_high(theta, weights) -> float:
    """``a . theta`` for one input on the unit cube."""
    theta = np.asarray(theta, dtype=float)
    a = np.asarray(weights, dtype=float)
    if theta.shape != a.shape:
        raise ValueError(f"input has dimension {theta.shape}, weights {a.shape}")
    return float(a @ theta)


@dataclass(frozen=True)
class SyntheticHigh:
    """Linear model ``f0(theta) = a . u(theta)`` where ``u`` maps the input
    box onto the unit cube, so ``u`` is uniform on ``[0, 1]^d``.

    The mean ``sum(a) / 2`` and variance ``sum(a**2) / 12`` are exact.
    """

    weights: tuple
    bounds: np.ndarray | None = None
    label: str = "f0"
    cost: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(v) for v in self.weights))
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=float)
            if b.shape != (len(self.weights), 2):
                raise ValueError(
                    f"bounds shape {b.shape} does not match {len(self.weights)} weights"
                )
            object.__setattr__(self, "bounds", b)

    @property
    def dimension(self) -> int:
        return len(self.weights)

    @property
    def mean(self) -> float:
        return math.fsum(self.weights) / 2.0

    @property
    def variance(self) -> float:
        return math.fsum(a * a for a in self.weights) / 12.0

    def exact_stats(self) -> ModelStats:
        return ModelStats(self.cost, 1.0, math.sqrt(self.variance))

    def evaluate(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=float).reshape(-1, self.dimension)
        return _unit_coords(x, self.bounds) @ np.asarray(self.weights)


@dataclass(frozen=True)
class SyntheticLowFi:
    """``f0(theta) + tau * g(theta)`` with ``g = sqrt(2) cos(2 pi u_1)``.

    ``g`` has mean 0, variance 1 and is uncorrelated with the linear
    ``f0``, so ``1 - rho^2 = gap`` exactly, where
    ``tau^2 = sigma0^2 gap / (1 - gap)``.
    """

    high: SyntheticHigh
    gap: float
    cost: float
    label: str = "f1"
    train_size: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.gap < 1.0:
            raise ValueError(
                f"{self.label}: accuracy gap {self.gap:g} must lie in [0, 1)"
            )
        if not self.cost > 0:
            raise ValueError(f"{self.label}: cost must be positive")

    @property
    def tau(self) -> float:
        return math.sqrt(self.high.variance * self.gap / (1.0 - self.gap))

    @property
    def correlation(self) -> float:
        return math.sqrt(1.0 - self.gap)

    def exact_stats(self) -> ModelStats:
        sd = math.sqrt(self.high.variance + self.tau**2)
        return ModelStats(self.cost, self.correlation, sd)

    def evaluate(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=float).reshape(-1, self.high.dimension)
        u1 = _unit_coords(x, self.high.bounds)[:, 0]
        g = math.sqrt(2.0) * np.cos(2.0 * math.pi * u1)
        return self.high.evaluate(x) + self.tau * g


def synthetic_lowfi_train(
    high: SyntheticHigh, accuracy: RateModel, cost: RateModel, n: int, label: str = "f1"
) -> SyntheticLowFi:
    """Synthetic model whose accuracy gap and cost equal the rate bounds at
    ``n`` exactly."""
    q = float(accuracy(n))
    if q >= 1.0:
        raise ValueError(
            f"{label}: accuracy bound {q:g} >= 1 at n={n} is not informative"
        )
    return SyntheticLowFi(high, q, float(cost(n)), label, int(n))


def synthetic_static(high: SyntheticHigh, correlation: float, cost: float, label: str) -> SyntheticLowFi:
    """Synthetic model with a prescribed correlation and cost."""
    if not 0.0 < correlation <= 1.0:
        raise ValueError(f"{label}: correlation must lie in (0, 1]")
    return SyntheticLowFi(high, 1.0 - correlation**2, float(cost), label)


def synthetic_trainer(high: SyntheticHigh, spec: TrainableSpec):
    """Training hook ``(n, seed) -> SyntheticLowFi`` for a trainable spec."""

    def train(n, seed=None):
        return synthetic_lowfi_train(high, spec.accuracy, spec.cost, n, spec.label)

    return train


@dataclass(frozen=True)
class FunctionModel:
    """Wraps a vectorized callable ``f(inputs) -> outputs``."""

    func: object
    cost: float
    label: str

    def evaluate(self, inputs) -> np.ndarray:
        return np.asarray(self.func(np.asarray(inputs, dtype=float)), dtype=float)

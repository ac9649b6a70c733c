"""Model statistics from pilot evaluations and replicate-based MSE."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ModelStats",
    "PilotMatrix",
    "StatsError",
    "pilot_stats",
    "replicate_mse",
]


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class ModelStats:
    """Cost ``w``, correlation with the high-fidelity output ``rho`` and
    output standard deviation ``sigma`` of one model.

    Costs are in units of one high-fidelity evaluation.
    """

    cost: float
    correlation: float
    stddev: float

    def __post_init__(self):
        for name in ("cost", "correlation", "stddev"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (math.isfinite(self.cost) and self.cost > 0):
            raise StatsError(f"cost must be positive, got {self.cost}")
        if not abs(self.correlation) <= 1.0:
            raise StatsError(f"correlation must lie in [-1, 1], got {self.correlation}")
        if not self.stddev >= 0:
            raise StatsError(f"stddev must be non-negative, got {self.stddev}")

    @property
    def variance(self) -> float:
        return self.stddev**2

    @property
    def rho2(self) -> float:
        return self.correlation**2

    def to_dict(self) -> dict:
        return {"cost": self.cost, "correlation": self.correlation, "stddev": self.stddev}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelStats":
        return cls(d["cost"], d["correlation"], d["stddev"])


@dataclass(frozen=True)
class PilotMatrix:
    """Pilot evaluations of every model on shared inputs.

    ``inputs`` has shape ``(N, d)`` and ``outputs`` shape ``(N, k + 1)``;
    column 0 of ``outputs`` is the high-fidelity model.
    """

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.asarray(self.outputs, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if x.shape[0] != y.shape[0]:
            raise StatsError("inputs and outputs must have the same number of rows")
        if y.shape[0] < 2:
            raise StatsError(f"need at least 2 pilot samples, got {y.shape[0]}")
        if not np.all(np.isfinite(y)):
            raise StatsError("pilot matrix has missing or non-finite outputs")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", y)

    @property
    def n_samples(self) -> int:
        return self.outputs.shape[0]

    @property
    def n_models(self) -> int:
        return self.outputs.shape[1]

    def to_csv(self, path) -> None:
        d = self.inputs.shape[1]
        header = [f"theta_{i + 1}" for i in range(d)] + [
            f"f_{j}" for j in range(self.n_models)
        ]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for xi, yi in zip(self.inputs, self.outputs):
                w.writerow([f"{v:.17g}" for v in (*xi, *yi)])

    @classmethod
    def from_csv(cls, path) -> "PilotMatrix":
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            theta_cols = [i for i, h in enumerate(header) if h.startswith("theta_")]
            f_cols = [i for i, h in enumerate(header) if h.startswith("f_")]
            if not f_cols or len(theta_cols) + len(f_cols) != len(header):
                raise StatsError(f"{path}:1: unrecognised header {header!r}")
            rows = []
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise StatsError(f"{path}:{reader.line_num}: incomplete row")
                try:
                    rows.append([float(c) for c in row])
                except ValueError:
                    raise StatsError(f"{path}:{reader.line_num}: cannot parse {row!r}") from None
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
        return cls(data[:, theta_cols], data[:, f_cols])


def pilot_stats(matrix: PilotMatrix, measured_costs) -> list[ModelStats]:
    """Sample statistics of every pilot-evaluated model.

    Standard deviations use the ``n - 1`` denominator; correlations are
    sample Pearson correlations with column 0. Costs are rescaled so that
    the high-fidelity model costs 1.
    """
    costs = np.asarray(measured_costs, dtype=float)
    if costs.shape != (matrix.n_models,):
        raise StatsError(f"expected {matrix.n_models} costs, got {costs.shape}")
    if np.any(costs <= 0):
        raise StatsError("measured costs must be positive")
    y = matrix.outputs
    sd = y.std(axis=0, ddof=1)
    zero = np.flatnonzero(sd == 0)
    if zero.size:
        raise StatsError(f"zero-variance output in column {zero[0]}; correlation undefined")
    centred = y - y.mean(axis=0)
    cov0 = centred.T @ centred[:, 0] / (matrix.n_samples - 1)
    rho = np.clip(cov0 / (sd * sd[0]), -1.0, 1.0)
    rho[0] = 1.0
    w = costs / costs[0]
    return [ModelStats(w[j], rho[j], sd[j]) for j in range(matrix.n_models)]


def replicate_mse(estimates, reference: float) -> float:
    """Mean squared deviation of replicate estimates from a reference."""
    est = np.asarray(estimates, dtype=float)
    if est.size == 0:
        raise StatsError("need at least one estimate")
    return float(np.mean((reference - est) ** 2))

"""Accuracy and cost rate models for trainable low-fidelity models.

A rate model is a bound ``c * r(n)`` on either the accuracy gap
``1 - rho(n)**2`` (decreasing in the number of training samples ``n``) or
the evaluation cost ``w(n)`` (increasing in ``n``). Two families are
supported: algebraic (``n**s``) and exponential (``exp(s * n)``), where the
signed exponent ``s`` is ``-alpha`` for accuracy and ``+beta`` for cost.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "Family",
    "Role",
    "RateModel",
    "PilotSeries",
    "FitReport",
    "RateDomainError",
    "FitError",
    "eval_rate",
    "eval_rate_deriv",
    "fit_rate",
    "validate_rate",
    "read_pilot_csv",
]

# Accuracy pilot values of exactly zero are clamped to this before taking logs.
ZERO_GAP_CLAMP = 1e-16


class Family(str, Enum):
    ALGEBRAIC = "algebraic"
    EXPONENTIAL = "exponential"


class Role(str, Enum):
    ACCURACY = "accuracy"
    COST = "cost"


class RateDomainError(ValueError):
    """Raised when a rate is evaluated outside ``(0, inf)``."""


class FitError(ValueError):
    """Raised when a pilot series cannot be fitted."""


@dataclass(frozen=True)
class RateModel:
    """Bound function ``scale * r(n)``.

    The model is not validated on construction so that invalid parameter
    sets can still be inspected with :func:`validate_rate`.
    """

    family: Family
    role: Role
    scale: float
    exponent: float

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "exponent", float(self.exponent))

    @property
    def signed_exponent(self) -> float:
        return -self.exponent if self.role is Role.ACCURACY else self.exponent

    def __call__(self, n):
        return eval_rate(self, n)

    def deriv(self, n, order: int = 1):
        return eval_rate_deriv(self, n, order)

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "role": self.role.value,
            "scale": self.scale,
            "exponent": self.exponent,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateModel":
        return cls(
            family=Family(d["family"]),
            role=Role(d["role"]),
            scale=float(d["scale"]),
            exponent=float(d["exponent"]),
        )

    @classmethod
    def algebraic_accuracy(cls, scale, alpha):
        return cls(Family.ALGEBRAIC, Role.ACCURACY, scale, alpha)

    @classmethod
    def exponential_accuracy(cls, scale, alpha):
        return cls(Family.EXPONENTIAL, Role.ACCURACY, scale, alpha)

    @classmethod
    def algebraic_cost(cls, scale, beta):
        return cls(Family.ALGEBRAIC, Role.COST, scale, beta)

    @classmethod
    def exponential_cost(cls, scale, beta):
        return cls(Family.EXPONENTIAL, Role.COST, scale, beta)


def _check_domain(n):
    arr = np.asarray(n, dtype=float)
    if np.any(~(arr > 0)):
        raise RateDomainError(f"rate argument must be positive, got {n!r}")
    return arr


def _unwrap(arr):
    return float(arr) if arr.ndim == 0 else arr


def eval_rate(model: RateModel, n):
    """Evaluate ``scale * r(n)`` for scalar or array ``n > 0``."""
    n = _check_domain(n)
    s = model.signed_exponent
    if model.family is Family.ALGEBRAIC:
        out = model.scale * n**s
    else:
        out = model.scale * np.exp(s * n)
    return _unwrap(out)


def eval_rate_deriv(model: RateModel, n, order: int = 1):
    """Exact first or second derivative of :func:`eval_rate` in ``n``."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    n = _check_domain(n)
    s = model.signed_exponent
    c = model.scale
    if model.family is Family.ALGEBRAIC:
        if order == 1:
            out = c * s * n ** (s - 1.0)
        else:
            out = c * s * (s - 1.0) * n ** (s - 2.0)
    else:
        out = c * s**order * np.exp(s * n)
    return _unwrap(out)


def validate_rate(model: RateModel) -> str | None:
    """Return ``None`` if ``model`` satisfies the rate assumptions, else a
    description of the first violation."""
    if not (math.isfinite(model.scale) and model.scale > 0):
        return "scale must be positive"
    if not (math.isfinite(model.exponent) and model.exponent > 0):
        return "exponent must be positive"
    # Positive scale and exponent fix the monotonicity direction per role;
    # probe anyway so a future family cannot silently break it.
    probe = np.array([0.5, 1.0, 2.0, 10.0])
    d1 = np.asarray(eval_rate_deriv(model, probe, 1))
    if model.role is Role.ACCURACY and np.any(d1 >= 0):
        return "accuracy rate must be strictly decreasing"
    if model.role is Role.COST and np.any(d1 <= 0):
        return "cost rate must be strictly increasing"
    return None


@dataclass(frozen=True)
class PilotSeries:
    """Pilot measurements ``(n_i, value_i)`` of an accuracy gap or a cost."""

    n: np.ndarray
    values: np.ndarray
    role: Role

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float)
        v = np.asarray(self.values, dtype=float)
        role = Role(self.role)
        if n.ndim != 1 or n.shape != v.shape:
            raise FitError("n and values must be 1-d arrays of equal length")
        if n.size < 3:
            raise FitError(f"need at least 3 pilot points, got {n.size}")
        if np.any(n <= 0) or np.any(n != np.round(n)):
            raise FitError("n values must be positive integers")
        if np.any(np.diff(n) <= 0):
            raise FitError("n values must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise FitError("pilot values must be finite")
        if role is Role.ACCURACY and np.any(v == 0):
            warnings.warn(
                f"accuracy gap of exactly 0 clamped to {ZERO_GAP_CLAMP:g}",
                RuntimeWarning,
                stacklevel=3,
            )
            v = np.where(v == 0, ZERO_GAP_CLAMP, v)
        if np.any(v <= 0):
            bad = int(np.argmax(v <= 0))
            raise FitError(f"pilot value at n={n[bad]:g} is not positive")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "role", role)

    @classmethod
    def from_model(cls, model: RateModel, n) -> "PilotSeries":
        n = np.asarray(n, dtype=float)
        return cls(n, np.asarray(eval_rate(model, n)), model.role)


@dataclass(frozen=True)
class FitReport:
    """Goodness of fit in the transformed (log) coordinates."""

    model: RateModel
    r_squared: float
    residual_norm: float
    # R^2 of every family that was tried, keyed by family value
    candidates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "r_squared": self.r_squared,
            "residual_norm": self.residual_norm,
            "candidates": dict(self.candidates),
        }


def _fit_family(series: PilotSeries, family: Family) -> FitReport:
    y = np.log(series.values)
    x = np.log(series.n) if family is Family.ALGEBRAIC else series.n
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    intercept, slope = coef
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    exponent = -slope if series.role is Role.ACCURACY else slope
    model = RateModel(family, series.role, math.exp(intercept), exponent)
    return FitReport(model, r2, math.sqrt(ss_res), {family.value: r2})


def fit_rate(series: PilotSeries, family="auto") -> FitReport:
    """Least-squares fit of a rate model to pilot data.

    Algebraic fits regress ``log(value)`` on ``log(n)``; exponential fits
    regress ``log(value)`` on ``n``. With ``family="auto"`` both are fitted
    and the one with the higher coefficient of determination wins (ties go
    to algebraic).

    Returns
    -------
    FitReport
        The fitted model plus residual norm and R^2. A fit whose exponent
        comes out non-positive is still returned; check it with
        :func:`validate_rate`.
    """
    if isinstance(family, str) and family.lower() == "auto":
        alg = _fit_family(series, Family.ALGEBRAIC)
        exp = _fit_family(series, Family.EXPONENTIAL)
        best = exp if exp.r_squared > alg.r_squared else alg
        scores = {**alg.candidates, **exp.candidates}
        return FitReport(best.model, best.r_squared, best.residual_norm, scores)
    return _fit_family(series, Family(family))


def read_pilot_csv(path, role) -> PilotSeries:
    """Read a pilot series from a CSV file with header ``n,value``.

    Raises
    ------
    FitError
        On a missing/incorrect header or an unparsable row; the message
        names the offending line.
    """
    path = Path(path)
    ns, vals = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["n", "value"]:
            raise FitError(f"{path}:1: expected header 'n,value', got {header!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise FitError(f"{path}:{line}: expected 2 columns, got {len(row)}")
            try:
                n = float(row[0])
                v = float(row[1])
            except ValueError:
                raise FitError(f"{path}:{line}: cannot parse {row!r}") from None
            ns.append(n)
            vals.append(v)
    try:
        return PilotSeries(np.array(ns), np.array(vals), Role(role))
    except FitError as exc:
        raise FitError(f"{path}: {exc}") from None

"""Experiment configuration loaded from a single JSON document.

Example::

    {
      "input": {"dimension": 2, "bounds": [[0, 1], [0, 1]]},
      "high_fidelity": {"kind": "synthetic", "weights": [1.0, 2.0]},
      "high_fidelity_cost_seconds": 1.0,
      "budget_units": "normalized",
      "budgets": [1000, 10000],
      "static_models": [{"label": "coarse", "correlation": 0.99, "cost": 0.01}],
      "trainable_models": [
        {"label": "surrogate",
         "accuracy": {"family": "algebraic", "scale": 0.5, "exponent": 1.0},
         "cost": {"family": "algebraic", "scale": 1e-4, "exponent": 1.0}}
      ],
      "seed": 1,
      "replicates": 50
    }

Budgets and ``cost_seconds`` entries in seconds are divided by
``high_fidelity_cost_seconds``. Rate constants are taken as given, in
high-fidelity units. A rate may instead name a pilot CSV to fit:
``{"pilot_csv": "gap.csv", "family": "auto"}``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .budget import TrainableSpec
from .engine.external import ExternalModel
from .engine.models import SyntheticHigh, synthetic_lowfi_train, synthetic_static
from .engine.sampling import check_bounds
from .rates import RateModel, Role, fit_rate, read_pilot_csv
from .stats import ModelStats

__all__ = ["ConfigError", "ExperimentConfig", "load_config"]

_UNITS = ("normalized", "seconds")


class ConfigError(ValueError):
    pass


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing '{key}'")
    return d[key]


@dataclass
class ExperimentConfig:
    high: dict
    budgets: list = field(default_factory=list)
    dimension: int | None = None
    bounds: np.ndarray | None = None
    hf_cost_seconds: float = 1.0
    budget_units: str = "normalized"
    statics: list = field(default_factory=list)
    trainables: list = field(default_factory=list)
    seed: int = 0
    replicates: int = 1
    reference: float | None = None
    stats_source: str = "pilot"
    pilot_samples: int = 200
    charge_pilot: bool = False
    estimators: tuple = ("mc", "mfmc", "camfmc")
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        high = _require(raw, "high_fidelity", "config")
        if not isinstance(high, dict):
            raise ConfigError("high_fidelity must be an object")
        inp = raw.get("input", {})
        dim = inp.get("dimension")
        bounds = inp.get("bounds")
        if high.get("kind", "stats") == "synthetic":
            w = _require(high, "weights", "high_fidelity")
            if dim is not None and dim != len(w):
                raise ConfigError(f"input dimension {dim} does not match {len(w)} weights")
            dim = len(w)
        if bounds is not None:
            try:
                bounds = check_bounds(bounds, dim)
            except ValueError as exc:
                raise ConfigError(f"input.bounds: {exc}") from None
            dim = bounds.shape[0]
        units = raw.get("budget_units", "normalized")
        if units not in _UNITS:
            raise ConfigError(f"budget_units must be one of {_UNITS}")
        hf_secs = float(raw.get("high_fidelity_cost_seconds", 1.0))
        if not hf_secs > 0:
            raise ConfigError("high_fidelity_cost_seconds must be positive")
        budgets = [float(b) for b in raw.get("budgets", [])]
        if any(not b > 0 for b in budgets):
            raise ConfigError("budgets must be positive")
        reps = int(raw.get("replicates", 1))
        if reps < 1:
            raise ConfigError("replicates must be >= 1")
        labels = ["f0"]
        for m in raw.get("static_models", []) + raw.get("trainable_models", []):
            lab = _require(m, "label", "model")
            if lab in labels:
                raise ConfigError(f"duplicate model label '{lab}'")
            labels.append(lab)
        return cls(
            high=high,
            budgets=budgets,
            dimension=dim,
            bounds=bounds,
            hf_cost_seconds=hf_secs,
            budget_units=units,
            statics=list(raw.get("static_models", [])),
            trainables=list(raw.get("trainable_models", [])),
            seed=int(raw.get("seed", 0)),
            replicates=reps,
            reference=raw.get("reference"),
            stats_source=raw.get("stats_source", "pilot"),
            pilot_samples=int(raw.get("pilot_samples", 200)),
            charge_pilot=bool(raw.get("charge_pilot", False)),
            estimators=tuple(raw.get("estimators", ("mc", "mfmc", "camfmc"))),
            base_dir=Path(base_dir),
        )

    # units

    def normalize_budget(self, b: float) -> float:
        return b / self.hf_cost_seconds if self.budget_units == "seconds" else float(b)

    @property
    def normalized_budgets(self) -> list:
        return [self.normalize_budget(b) for b in self.budgets]

    def _cost(self, m: dict, where: str) -> float | None:
        if "cost" in m:
            return float(m["cost"])
        if "cost_seconds" in m:
            return float(m["cost_seconds"]) / self.hf_cost_seconds
        return None

    # statistics

    @property
    def is_synthetic(self) -> bool:
        return self.high.get("kind", "stats") == "synthetic"

    def high_stats(self) -> ModelStats:
        if self.is_synthetic:
            return self.high_model().exact_stats()
        if "variance" in self.high:
            sd = math.sqrt(float(self.high["variance"]))
        else:
            sd = float(self.high.get("stddev", 1.0))
        return ModelStats(1.0, 1.0, sd)

    def static_stats(self) -> list:
        sd0 = self.high_stats().stddev
        out = []
        for m in self.statics:
            where = f"static model '{m['label']}'"
            cost = self._cost(m, where)
            if cost is None:
                raise ConfigError(f"{where}: needs 'cost' or 'cost_seconds'")
            rho = float(_require(m, "correlation", where))
            if self.is_synthetic and m.get("kind", "synthetic") == "synthetic":
                sd = synthetic_static(self.high_model(), rho, cost, m["label"]).exact_stats().stddev
            elif "variance" in m:
                sd = math.sqrt(float(m["variance"]))
            else:
                sd = float(m.get("stddev", sd0))
            out.append((m["label"], ModelStats(cost, rho, sd)))
        return out

    def _rate(self, spec, role: Role, where: str) -> RateModel:
        if not isinstance(spec, dict):
            raise ConfigError(f"{where}: {role.value} rate must be an object")
        if "pilot_csv" in spec:
            path = self.base_dir / spec["pilot_csv"]
            series = read_pilot_csv(path, role)
            return fit_rate(series, spec.get("family", "auto")).model
        try:
            return RateModel(
                spec["family"], role, float(spec["scale"]), float(spec["exponent"])
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{where}: invalid {role.value} rate ({exc})") from None

    def trainable_specs(self, with_trainers: bool = False) -> list:
        specs = []
        for m in self.trainables:
            where = f"trainable model '{m['label']}'"
            acc = self._rate(_require(m, "accuracy", where), Role.ACCURACY, where)
            cost = self._rate(_require(m, "cost", where), Role.COST, where)
            try:
                spec = TrainableSpec(
                    m["label"],
                    acc,
                    cost,
                    int(m.get("min_train", 1)),
                    tuple(m["feasible_n"]) if m.get("feasible_n") else None,
                )
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            if with_trainers:
                spec = dataclasses.replace(spec, trainer=self._trainer(m, spec))
            specs.append(spec)
        return specs

    # model handles

    def high_model(self):
        kind = self.high.get("kind", "stats")
        if kind == "synthetic":
            return SyntheticHigh(tuple(self.high["weights"]), self.bounds)
        if kind == "external":
            return self._external(self.high, "f0", 1.0)
        raise ConfigError(f"high_fidelity kind '{kind}' cannot be evaluated")

    def _external(self, m: dict, label: str, cost):
        cwd = self.base_dir / m["cwd"] if "cwd" in m else self.base_dir
        return ExternalModel(
            _require(m, "command", f"model '{label}'"),
            label=label,
            cwd=cwd,
            cost=cost,
            hf_cost_seconds=self.hf_cost_seconds,
        )

    def static_models(self, high) -> dict:
        out = {}
        for m in self.statics:
            kind = m.get("kind", "synthetic")
            cost = self._cost(m, m["label"])
            if kind == "synthetic":
                if not isinstance(high, SyntheticHigh):
                    raise ConfigError(f"{m['label']}: synthetic models need a synthetic high-fidelity model")
                out[m["label"]] = synthetic_static(high, float(m["correlation"]), cost, m["label"])
            elif kind == "external":
                out[m["label"]] = self._external(m, m["label"], cost)
            else:
                raise ConfigError(f"{m['label']}: unknown kind '{kind}'")
        return out

    def _trainer(self, m: dict, spec: TrainableSpec):
        kind = m.get("kind", "synthetic")
        label = m["label"]
        if kind == "synthetic":
            def train(n, seed=None):
                return synthetic_lowfi_train(self.high_model(), spec.accuracy, spec.cost, n, label)
            return train
        if kind == "external":
            def train(n, seed=0):
                return self._external(m, label, self._cost(m, label)).train(n, seed)
            return train
        raise ConfigError(f"{label}: unknown kind '{kind}'")

    def exact_mean(self) -> float | None:
        return self.high_model().mean if self.is_synthetic else None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return ExperimentConfig.from_dict(raw, path.parent)

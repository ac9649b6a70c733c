"""Budget bookkeeping for estimator runs."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["BudgetLedger", "BudgetExceededError"]

# relative slack for floating-point round-off in cost sums
_REL_TOL = 1e-12


class BudgetExceededError(RuntimeError):
    pass


@dataclass
class BudgetLedger:
    """Tracks what a run spends, in high-fidelity evaluation units.

    Pilot evaluations are recorded separately and only count against the
    budget when ``charge_pilot`` is set.
    """

    budget: float
    charge_pilot: bool = False
    spent_training: float = 0.0
    spent_sampling: float = 0.0
    spent_pilot: float = 0.0
    counts: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)

    @property
    def spent(self) -> float:
        total = self.spent_training + self.spent_sampling
        return total + self.spent_pilot if self.charge_pilot else total

    @property
    def remaining(self) -> float:
        return self.budget - self.spent

    def _ensure(self, amount: float, what: str) -> None:
        if self.spent + amount > self.budget * (1.0 + _REL_TOL):
            raise BudgetExceededError(
                f"{what} costs {amount:.6g} but only {self.remaining:.6g} of "
                f"{self.budget:.6g} remains"
            )

    def check_sampling(self, amount: float, what: str = "sampling") -> None:
        self._ensure(amount, what)

    def charge_sampling(self, label: str, m: int, cost: float) -> None:
        if m == 0:
            return
        self._ensure(m * cost, f"{m} evaluations of {label}")
        self.spent_sampling += m * cost
        self.counts[label] = self.counts.get(label, 0) + int(m)

    def charge_training(self, label: str, n: int, hf_cost: float = 1.0) -> None:
        self._ensure(n * hf_cost, f"training {label} on {n} samples")
        self.spent_training += n * hf_cost
        self.training[label] = self.training.get(label, 0) + int(n)

    def charge_pilot_evaluations(self, m: int, cost: float) -> None:
        if self.charge_pilot:
            self._ensure(m * cost, "pilot evaluations")
        self.spent_pilot += m * cost

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "spent_training": self.spent_training,
            "spent_sampling": self.spent_sampling,
            "spent_pilot": self.spent_pilot,
            "pilot_charged": self.charge_pilot,
            "counts": dict(sorted(self.counts.items())),
            "training": dict(sorted(self.training.items())),
        }

import pytest

from camfmc.allocate import Hierarchy, analytic_mse
from camfmc.budget import TrainableSpec
from camfmc.rates import RateModel
from camfmc.selection import select_models, subset_name
from camfmc.stats import ModelStats

HF = ModelStats(1.0, 1.0, 2.0)
GOOD = ModelStats(0.01, 0.99, 2.0)
WEAK = ModelStats(0.001, 0.5, 2.0)
BUDGETS = [100.0, 1000.0]


def names(result):
    return [c.name for c in result.ranked]


class TestSelection:
    def test_high_fidelity_only(self):
        r = select_models([("f0", HF)], BUDGETS)
        assert names(r) == ["f0"]
        assert r.ranked[0].mse == [4.0 / 100, 4.0 / 1000]
        assert r.excluded == []

    def test_perfect_correlation_excluded(self):
        r = select_models([("f0", HF), ("same", ModelStats(0.1, 1.0, 2.0))], BUDGETS)
        assert names(r) == ["f0"]
        assert r.excluded[0][0] == "f0+same"
        assert "correlation 1" in r.excluded[0][1]

    def test_identical_candidates_excluded(self):
        r = select_models([("f0", HF), ("a", GOOD), ("b", GOOD)], BUDGETS)
        assert set(names(r)) == {"f0", "f0+a", "f0+b"}
        (name, reason), = r.excluded
        assert name == "f0+a+b" and "non-strict" in reason

    def test_static_ranking_matches_analytic(self):
        r = select_models([("f0", HF), ("good", GOOD), ("weak", WEAK)], BUDGETS)
        p = BUDGETS[-1]
        expected = {
            "f0": analytic_mse(Hierarchy((HF,)), p),
            "f0+good": analytic_mse(Hierarchy((HF, GOOD)), p),
            "f0+weak": analytic_mse(Hierarchy((HF, WEAK)), p),
            "f0+good+weak": analytic_mse(Hierarchy((HF, GOOD, WEAK)), p),
        }
        got = {c.name: c.mse[-1] for c in r.ranked}
        assert got == pytest.approx(expected, rel=1e-14)
        assert names(r) == sorted(expected, key=expected.get)

    def test_trainable_candidate(self):
        spec = TrainableSpec(
            "nn", RateModel.algebraic_accuracy(0.1, 1.0), RateModel.algebraic_cost(1e-5, 1.0)
        )
        r = select_models([("f0", HF), ("nn", spec)], BUDGETS)
        assert names(r) == ["f0+nn", "f0"]
        best = r.ranked[0]
        n = best.training[-1]["nn"]
        assert n >= 1
        p = BUDGETS[-1]
        expected = 2 * HF.variance * (spec.accuracy(n) + spec.cost(n)) / (p - n)
        assert best.bound[-1] == pytest.approx(expected, rel=1e-14)
        assert best.mse[-1] <= best.bound[-1]

    def test_rows_and_dict(self, tmp_path):
        r = select_models([("f0", HF), ("good", GOOD)], BUDGETS)
        rows = list(r.rows())
        assert rows[0] == ("f0+good", 100.0, r.ranked[0].mse[0])
        assert len(rows) == 4
        d = r.to_dict()
        assert [x["rank"] for x in d["ranking"]] == [1, 2]
        r.to_csv(tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == "subset,budget,analytic_mse"

    def test_subset_name(self):
        assert subset_name(["f0", "a", "b"]) == "f0+a+b"

    @pytest.mark.parametrize("budgets", [[], [0.0], [-1.0]])
    def test_invalid_budgets(self, budgets):
        with pytest.raises(ValueError):
            select_models([("f0", HF)], budgets)

    def test_high_fidelity_required(self):
        with pytest.raises(ValueError):
            select_models([], BUDGETS)
        with pytest.raises(TypeError):
            select_models([("f0", object())], BUDGETS)

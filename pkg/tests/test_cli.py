import csv
import json
import math

import numpy as np
import pytest

from camfmc.budget import ObjectiveContext, TrainableSpec, exhaustive_minimize
from camfmc.cli import EXIT_INFEASIBLE, EXIT_USAGE, main
from camfmc.rates import PilotSeries

from cases import ALL_RATES, TB_HF_SECONDS, TB_RB_ACC, TB_RB_COST, TB_SVR_ACC, TB_SVR_COST
from conftest import CONFIGS


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def small_synthetic(**over):
    cfg = json.loads((CONFIGS / "synthetic.json").read_text())
    cfg.update({"budgets": [200, 2000], "replicates": 20, "pilot_samples": 50})
    cfg.update(over)
    return cfg


class TestFit:
    @pytest.mark.parametrize("name", sorted(ALL_RATES))
    def test_round_trip(self, tmp_path, name):
        model = ALL_RATES[name]
        series = PilotSeries.from_model(model, np.arange(1, 41, 3))
        pilot = tmp_path / "pilot.csv"
        pilot.write_text("n,value\n" + "".join(f"{n:g},{v:.17g}\n" for n, v in zip(series.n, series.values)))
        argv = ["fit", str(pilot), "--role", model.role.value, "--family", model.family.value]
        assert main(argv + ["--out", str(tmp_path)]) == 0
        out = json.loads((tmp_path / "rate_model.json").read_text())
        assert out["family"] == model.family.value
        assert out["scale"] == pytest.approx(model.scale, rel=1e-8)
        assert out["exponent"] == pytest.approx(model.exponent, rel=1e-8)
        assert out["valid"] is True

    def test_malformed_csv_names_line(self, tmp_path, capsys):
        pilot = tmp_path / "bad.csv"
        pilot.write_text("n,value\n1,0.5\n2,oops\n3,0.1\n")
        assert main(["fit", str(pilot), "--out", str(tmp_path)]) == EXIT_USAGE
        assert "bad.csv:3" in capsys.readouterr().err

    def test_inadmissible_fit_warns(self, tmp_path, capsys):
        pilot = tmp_path / "up.csv"
        pilot.write_text("n,value\n1,0.1\n2,0.2\n4,0.4\n")
        assert main(["fit", str(pilot), "--role", "accuracy", "--family", "algebraic",
                     "--out", str(tmp_path)]) == 0
        assert "not admissible" in capsys.readouterr().err
        assert json.loads((tmp_path / "rate_model.json").read_text())["valid"] is False


class TestPlan:
    def test_mc_only(self, tmp_path):
        cfg = {"high_fidelity": {"kind": "stats", "variance": 2.0}, "budgets": [10.5, 100]}
        assert main(["plan", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "allocation.csv")
        assert [(r["model"], r["m"]) for r in rows] == [("f0", "10"), ("f0", "100")]
        plan = json.loads((tmp_path / "plan.json").read_text())
        assert [p["analytic_mse"] for p in plan["plans"]] == pytest.approx([2.0 / 10.5, 2.0 / 100], rel=1e-15)

    def test_thermal_block(self, tmp_path):
        cfg = str(CONFIGS / "thermal_block.json")
        assert main(["plan", "--config", cfg, "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "allocation.csv")
        rb = [int(r["n_train"]) for r in rows if r["model"] == "rb"]
        assert rb == sorted(rb)
        assert rb[-1] == rb[-2] == rb[-3]
        plan = json.loads((tmp_path / "plan.json").read_text())["plans"]
        # first step matches the exhaustive oracle at every budget
        rb_spec = TrainableSpec("rb", TB_RB_ACC, TB_RB_COST)
        for entry, n in zip(plan, rb):
            p = entry["budget_normalized"]
            assert p == pytest.approx(entry["budget"] / TB_HF_SECONDS)
            assert n == exhaustive_minimize(ObjectiveContext(0.0, 1.0, p, rb_spec))[0]
        assert all(e["analytic_mse"] < e["mc_analytic_mse"] for e in plan)

    def test_asdex_budget_split(self, tmp_path):
        cfg = str(CONFIGS / "asdex.json")
        assert main(["plan", "--config", cfg, "--out", str(tmp_path)]) == 0
        split = read_csv(tmp_path / "budget_split.csv")
        budgets = json.loads((CONFIGS / "asdex.json").read_text())["budgets"]
        assert [float(r["budget"]) for r in split] == budgets
        for r in split:
            total = float(r["training"]) + float(r["sampling"]) + float(r["unused"])
            assert total == pytest.approx(float(r["budget"]), rel=1e-9)
            assert 0 < float(r["training_share"]) < 1
            assert float(r["training_share"]) + float(r["sampling_share"]) <= 1 + 1e-12
        alloc = read_csv(tmp_path / "allocation.csv")
        assert {r["model"] for r in alloc} == {"f0", "coarse", "sg", "dnn"}

    def test_budget_override(self, tmp_path):
        cfg = str(CONFIGS / "thermal_block.json")
        assert main(["plan", "--config", cfg, "--budget", "50", "--out", str(tmp_path)]) == 0
        assert {r["budget"] for r in read_csv(tmp_path / "allocation.csv")} == {"50"}

    def test_infeasible_budget(self, tmp_path, capsys):
        cfg = str(CONFIGS / "thermal_block.json")
        code = main(["plan", "--config", cfg, "--budget", "0.1", "--out", str(tmp_path)])
        assert code == EXIT_INFEASIBLE
        assert "budget" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["plan", "--out", str(tmp_path)]) == EXIT_USAGE
        assert main(["plan", "--config", str(tmp_path / "none.json")]) == EXIT_USAGE

    def test_invalid_json(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"budgets": [1,\n')
        assert main(["plan", "--config", str(path)]) == EXIT_USAGE
        assert "broken.json:" in capsys.readouterr().err


class TestEstimate:
    def test_deterministic(self, tmp_path):
        cfg = write_config(tmp_path, small_synthetic())
        outs = []
        for name in ("a", "b"):
            assert main(["estimate", "--config", cfg, "--out", str(tmp_path / name)]) == 0
            outs.append((tmp_path / name / "estimate.json").read_bytes())
        assert outs[0] == outs[1]
        result = json.loads(outs[0])
        assert result["status"] == "ok"
        spent = result["ledger"]["spent_training"] + result["ledger"]["spent_sampling"]
        assert spent <= 200 * (1 + 1e-12)

    def test_seed_changes_estimate(self, tmp_path):
        cfg = write_config(tmp_path, small_synthetic())
        main(["estimate", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["estimate", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "b")])
        a = json.loads((tmp_path / "a" / "estimate.json").read_text())["estimate"]
        b = json.loads((tmp_path / "b" / "estimate.json").read_text())["estimate"]
        assert a != b


class TestBenchmark:
    def test_small_synthetic(self, tmp_path):
        cfg = write_config(tmp_path, small_synthetic(replicates=20))
        assert main(["benchmark", "--config", cfg, "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "benchmark.csv")
        cell = {(r["estimator"], float(r["budget"])): r for r in rows}
        assert len(cell) == 6
        sigma2 = 30.0 / 12.0
        for p in (200.0, 2000.0):
            assert float(cell["mc", p]["analytic_mse"]) == pytest.approx(sigma2 / p, rel=1e-15)
            assert float(cell["camfmc", p]["empirical_mse"]) < float(cell["mc", p]["empirical_mse"])
        reps = read_csv(tmp_path / "replicates.csv")
        assert len(reps) == 6 * 20
        meta = json.loads((tmp_path / "benchmark.json").read_text())
        assert meta["reference"] == 5.0 and meta["reference_source"] == "exact"

    def test_jobs_do_not_change_output(self, tmp_path):
        cfg = write_config(tmp_path, small_synthetic(replicates=4))
        main(["benchmark", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["benchmark", "--config", cfg, "--jobs", "3", "--out", str(tmp_path / "b")])
        for name in ("benchmark.csv", "replicates.csv", "benchmark.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_single_replicate_warns(self, tmp_path, capsys):
        cfg = write_config(tmp_path, small_synthetic(budgets=[200]))
        with pytest.warns(RuntimeWarning, match="fewer than 2"):
            code = main(["benchmark", "--config", cfg, "--replicates", "1", "--out", str(tmp_path)])
        assert code == 0
        assert "fewer than 2" in capsys.readouterr().err

    def test_config_reference(self, tmp_path):
        cfg = write_config(tmp_path, small_synthetic(budgets=[200], replicates=2, reference=4.5))
        main(["benchmark", "--config", cfg, "--out", str(tmp_path)])
        assert json.loads((tmp_path / "benchmark.json").read_text())["reference"] == 4.5


class TestSelect:
    def test_outputs(self, tmp_path):
        cfg = str(CONFIGS / "thermal_block.json")
        assert main(["select", "--config", cfg, "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "selection.csv")
        subsets = list(dict.fromkeys(r["subset"] for r in rows))
        assert set(subsets) == {"f0", "f0+rb", "f0+svr", "f0+rb+svr"}
        assert subsets[-1] == "f0"
        summary = json.loads((tmp_path / "selection.json").read_text())
        assert summary["largest_budget"] == 500
        mse = [r["mse_at_largest_budget"] for r in summary["ranking"]]
        assert mse == sorted(mse)
        mc = [float(r["analytic_mse"]) for r in rows if r["subset"] == "f0"]
        budgets = [float(r["budget"]) for r in rows if r["subset"] == "f0"]
        for m, b in zip(mc, budgets):
            assert m == pytest.approx(0.0018 * TB_HF_SECONDS / b, rel=1e-14)


def test_svr_rates_in_thermal_config():
    cfg = json.loads((CONFIGS / "thermal_block.json").read_text())
    svr = next(m for m in cfg["trainable_models"] if m["label"] == "svr")
    assert svr["accuracy"]["scale"] == TB_SVR_ACC.scale
    assert svr["cost"]["exponent"] == TB_SVR_COST.exponent
    assert math.isclose(cfg["high_fidelity_cost_seconds"], TB_HF_SECONDS)

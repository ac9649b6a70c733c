"""Acceptance criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary
prints one PASS/FAIL line per criterion.
"""

import csv
import dataclasses
import json
import math
import time

import numpy as np
import pytest

from camfmc.allocate import Hierarchy, analytic_mse, optimal_allocation
from camfmc.budget import (
    ObjectiveContext,
    TrainableSpec,
    build_hierarchy,
    check_convexity,
    minimize_objective,
    saturation_bound,
)
from camfmc.cli import main
from camfmc.engine import (
    SyntheticHigh,
    mc_estimate,
    mfmc_estimate,
    run_ca_mfmc,
    synthetic_static,
    synthetic_trainer,
)
from camfmc.rates import PilotSeries, RateModel
from camfmc.stats import ModelStats

from cases import (
    ALL_RATES,
    AUG_COARSE,
    AUG_DNN_ACC,
    AUG_DNN_COST,
    AUG_HF_SECONDS,
    AUG_SG_ACC,
    AUG_SG_COST,
    TB_BUDGETS_SECONDS,
    TB_HF_SECONDS,
    TB_RB_ACC,
    TB_RB_COST,
    TB_SIGMA0_SQ,
    TB_SVR_ACC,
    TB_SVR_COST,
)
from conftest import CONFIGS
from oracles import brute_argmin, numerical_allocation, random_hierarchy

RB = TrainableSpec("rb", TB_RB_ACC, TB_RB_COST)
SVR = TrainableSpec("svr", TB_SVR_ACC, TB_SVR_COST)
SG = TrainableSpec("sg", AUG_SG_ACC, AUG_SG_COST)
DNN = TrainableSpec("dnn", AUG_DNN_ACC, AUG_DNN_COST)
AUG_BUDGETS = [b / AUG_HF_SECONDS for b in (1e4, 3e4, 1e5, 3e5, 5e5, 1e6, 3e6, 1e7)]

# Reported reference sizes that differ from the exhaustive oracle; kept
# for the printed comparison only.
REPORTED_RB_N = 18
REPORTED_DNN_N = 159


def oracle_argmin(ctx):
    spec = ctx.spec
    return brute_argmin(spec.accuracy, spec.cost, ctx.kappa, ctx.prev_cost, ctx.remaining_budget,
                        spec.min_train)


def test_criterion_1_allocation_oracle():
    rng = np.random.default_rng(20240501)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        k = int(rng.integers(1, 5))
        stats = random_hierarchy(rng, k)
        p = float(rng.uniform(10.0, 1e5))
        alloc = optimal_allocation(Hierarchy(tuple(stats)), p)
        mse, m, alphas = numerical_allocation(stats, p)
        rel = max(
            abs(alloc.analytic_mse - mse) / mse,
            np.max(np.abs(np.array(alloc.real_counts) - m) / m),
            np.max(np.abs(np.array(alloc.coefficients) - alphas) / np.abs(alphas)),
        )
        worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    print(f"worst relative deviation {worst:.3g}, {elapsed:.2f} s")
    assert worst <= 1e-6
    assert elapsed < 5.0


def test_criterion_2_mc_reduction():
    rng = np.random.default_rng(2)
    for _ in range(100):
        s0 = float(rng.uniform(1e-3, 1e3))
        p = float(rng.uniform(1.0, 1e9))
        stats = ModelStats(1.0, 1.0, s0)
        expected = stats.variance / p
        got = analytic_mse(Hierarchy((stats,)), p)
        assert got == pytest.approx(expected, rel=4 * np.finfo(float).eps)
        alloc = optimal_allocation(Hierarchy((stats,)), p)
        assert alloc.counts == (math.floor(p),)
        assert alloc.analytic_mse == pytest.approx(expected, rel=4 * np.finfo(float).eps)


def _asdex_contexts():
    ctxs = []
    for p in AUG_BUDGETS:
        if p < 4:
            continue
        ctxs.append(ObjectiveContext(0.0, 1.0, p, SG))
        ctxs.append(ObjectiveContext(0.0, 1.0, p, DNN))
        coarse_kappa = 1.0 - AUG_COARSE.rho2
        ctxs.append(ObjectiveContext(coarse_kappa, AUG_COARSE.cost, p, SG))
        ctxs.append(ObjectiveContext(coarse_kappa, AUG_COARSE.cost, p, DNN))
        n_sg = minimize_objective(ctxs[-2]).n_star
        kappa = coarse_kappa + AUG_COARSE.cost * SG.predicted_gap(n_sg)
        if p - n_sg > 3:
            ctxs.append(ObjectiveContext(kappa, SG.predicted_cost(n_sg), p - n_sg, DNN))
    return ctxs


def _random_convex_contexts(rng, count):
    families = ["algebraic", "exponential"]
    ctxs = []
    for i in range(count):
        acc = RateModel(families[i % 2], "accuracy", rng.uniform(1e-3, 1.0), rng.uniform(0.05, 2.0))
        cost = RateModel(families[(i // 2) % 2], "cost", 10 ** rng.uniform(-8, -2), rng.uniform(1.0, 2.0))
        ctxs.append(
            ObjectiveContext(
                float(rng.uniform(0.0, 0.1)),
                float(10 ** rng.uniform(-4, 0)),
                float(rng.uniform(3.0, 2e4)),
                TrainableSpec("x", acc, cost),
            )
        )
    return ctxs


def test_criterion_3_optimizer_oracle():
    t0 = time.perf_counter()
    rb_ctx = ObjectiveContext(0.0, 1.0, 434.0, RB)
    n1 = minimize_objective(rb_ctx).n_star
    svr_ctx = ObjectiveContext(TB_RB_ACC(n1), TB_RB_COST(n1), 434.0 - n1, SVR)
    groups = {
        "rb": [rb_ctx],
        "svr_step2": [svr_ctx],
        "asdex": _asdex_contexts(),
        "random": _random_convex_contexts(np.random.default_rng(3), 50),
    }
    mismatches = []
    for name, ctxs in groups.items():
        for ctx in ctxs:
            got = minimize_objective(ctx).n_star
            want = oracle_argmin(ctx)
            if got != want:
                mismatches.append((name, ctx, got, want))
    elapsed = time.perf_counter() - t0

    p_dnn = 5e5 / AUG_HF_SECONDS
    dnn_ctx = ObjectiveContext(1.0 - AUG_COARSE.rho2, AUG_COARSE.cost, p_dnn, DNN)
    print(f"RB n1* = {n1} (reported {REPORTED_RB_N}); "
          f"DNN n3* = {minimize_objective(dnn_ctx).n_star} (reported {REPORTED_DNN_N}); "
          f"{sum(map(len, groups.values()))} contexts in {elapsed:.2f} s")
    assert mismatches == []
    assert elapsed < 10.0


def test_criterion_4_convexity_certificate():
    p = 1e7 / AUG_HF_SECONDS
    dnn_ctx = ObjectiveContext(1.0 - AUG_COARSE.rho2, AUG_COARSE.cost, p, DNN)
    assert dnn_ctx.hi == 24330
    assert check_convexity(dnn_ctx, 1, 24330).ok

    p_tb = 50.0 / TB_HF_SECONDS
    n1 = minimize_objective(ObjectiveContext(0.0, 1.0, p_tb, RB)).n_star
    svr_ctx = ObjectiveContext(TB_RB_ACC(n1), TB_RB_COST(n1), p_tb - n1, SVR)
    assert check_convexity(svr_ctx, 1, 415).ok
    assert check_convexity(svr_ctx, 1, svr_ctx.hi).ok

    # independent check of h'' > 0 on every integer of both intervals
    for ctx, hi in ((dnn_ctx, 24330), (svr_ctx, 415)):
        n = np.arange(1, hi + 1, dtype=float)
        spec = ctx.spec
        h2 = ctx.prev_cost * spec.accuracy.deriv(n, 2) + spec.cost.deriv(n, 2)
        assert np.all(h2 > 0)


def test_criterion_5_saturation():
    t0 = time.perf_counter()
    nbar = saturation_bound(RB)
    cap = max(1, math.ceil(nbar))
    ns = [minimize_objective(ObjectiveContext(0.0, 1.0, p, RB)).n_star for p in (1e2, 1e3, 1e4, 1e5)]
    elapsed = time.perf_counter() - t0
    print(f"n* = {ns}, n_bar = {nbar:.6g}, {elapsed:.3f} s")
    assert all(n <= cap for n in ns)
    # constant from some p0 on within the sweep
    assert ns[-1] == ns[-2]
    first = next(i for i in range(len(ns)) if all(n == ns[-1] for n in ns[i:]))
    assert first < len(ns) - 1
    assert elapsed < 5.0


def test_criterion_6_analytic_dominance():
    hf = ModelStats(1.0, 1.0, math.sqrt(TB_SIGMA0_SQ))
    ratios = {}
    for b in TB_BUDGETS_SECONDS:
        p = b / TB_HF_SECONDS
        plan = build_hierarchy(hf, [], [RB, SVR], p, allow_fallback=True)
        ca = analytic_mse(plan.stats, p, plan.training_spent)
        mc = TB_SIGMA0_SQ / p
        ratios[b] = mc / ca
    print("MC / CA-MFMC:", {b: round(r, 1) for b, r in ratios.items()})
    assert all(r > 1 for r in ratios.values())
    assert ratios[500] >= 1e2


def test_criterion_7_model_selection(tmp_path):
    assert main(["select", "--config", str(CONFIGS / "asdex.json"), "--out", str(tmp_path)]) == 0
    ranking = json.loads((tmp_path / "selection.json").read_text())["ranking"]
    order = [r["subset"] for r in ranking]
    print("ranking:", [(r["subset"], r["mse_at_largest_budget"]) for r in ranking])
    target = order.index("f0+sg+dnn")
    with_coarse = [s for s in order if "coarse" in s.split("+")]
    assert with_coarse
    assert all(order.index(s) < target for s in with_coarse)


N_REP = 200
HIGH = SyntheticHigh((1.0, 2.0, 3.0, 4.0))
COARSE = synthetic_static(HIGH, 0.99, 0.01, "coarse")
SUR = TrainableSpec("sur", RateModel.algebraic_accuracy(0.05, 1.0), RateModel.algebraic_cost(1e-4, 1.0))
SUR = dataclasses.replace(SUR, trainer=synthetic_trainer(HIGH, SUR))
STAT_BUDGETS = (500.0, 2000.0)


def test_criterion_8_statistical_suite():
    t0 = time.perf_counter()
    mu, var = HIGH.mean, HIGH.variance
    hier = Hierarchy((HIGH.exact_stats(), COARSE.exact_stats()), ("f0", "coarse"))
    failures = []
    for b_idx, p in enumerate(STAT_BUDGETS):
        alloc = optimal_allocation(hier, p)
        plan = build_hierarchy(HIGH.exact_stats(), [("coarse", COARSE.exact_stats())], [SUR], p)
        seeds = [1_000_000 * b_idx + 1000 * e for e in range(3)]
        est = {
            "mc": [mc_estimate(HIGH, math.floor(p), seeds[0] + r) for r in range(N_REP)],
            "mfmc": [mfmc_estimate([HIGH, COARSE], alloc, seeds[1] + r).estimate for r in range(N_REP)],
        }
        runs = [
            run_ca_mfmc(plan, HIGH, {"coarse": COARSE}, {"sur": SUR}, seeds[2] + r, stats_source="exact")
            for r in range(N_REP)
        ]
        est["camfmc"] = [r.estimate for r in runs]
        analytic = {"mc": var / p, "mfmc": alloc.analytic_mse, "camfmc": runs[0].analytic_mse}
        assert len({r.analytic_mse for r in runs}) == 1
        mse = {}
        for name, values in est.items():
            v = np.array(values)
            mse[name] = float(np.mean((v - mu) ** 2))
            bias_ok = abs(v.mean() - mu) <= 4 * v.std(ddof=1) / math.sqrt(N_REP)
            ratio = mse[name] / analytic[name]
            print(f"p={p:g} {name:>6}: mean-mu={v.mean() - mu:+.3g} mse={mse[name]:.4g} "
                  f"analytic={analytic[name]:.4g} ratio={ratio:.3f}")
            if not bias_ok:
                failures.append(f"{name} p={p:g} biased")
            if not 1 / 3 <= ratio <= 3:
                failures.append(f"{name} p={p:g} empirical/analytic {ratio:.3g}")
        if not mse["mfmc"] <= mse["mc"] / 5:
            failures.append(f"p={p:g} MFMC/MC = {mse['mfmc'] / mse['mc']:.3g}")
    elapsed = time.perf_counter() - t0
    print(f"{elapsed:.1f} s")
    assert failures == []
    assert elapsed < 120.0


def _outputs(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_criterion_9_determinism(tmp_path):
    synth = json.loads((CONFIGS / "synthetic.json").read_text())
    synth.update({"budgets": [300], "replicates": 3, "pilot_samples": 50})
    synth_path = tmp_path / "synthetic.json"
    synth_path.write_text(json.dumps(synth))
    pilot = tmp_path / "pilot.csv"
    series = PilotSeries.from_model(TB_RB_ACC, np.arange(1, 30))
    pilot.write_text("n,value\n" + "".join(f"{n:g},{v:.17g}\n" for n, v in zip(series.n, series.values)))
    commands = {
        "fit": [str(pilot), "--role", "accuracy"],
        "plan": ["--config", str(CONFIGS / "thermal_block.json")],
        "estimate": ["--config", str(synth_path)],
        "benchmark": ["--config", str(synth_path)],
        "select": ["--config", str(CONFIGS / "asdex.json")],
    }
    for cmd, args in commands.items():
        runs = []
        for rep in ("a", "b"):
            out = tmp_path / cmd / rep
            assert main([cmd, *args, "--out", str(out)]) == 0
            runs.append(_outputs(out))
        assert runs[0], cmd
        assert runs[0] == runs[1], cmd


@pytest.mark.parametrize("name", sorted(ALL_RATES))
def test_criterion_10_fit_round_trip(tmp_path, name):
    model = ALL_RATES[name]
    series = PilotSeries.from_model(model, np.array([1, 2, 4, 8, 16, 32, 64, 128]))
    pilot = tmp_path / f"{name}.csv"
    with pilot.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "value"])
        w.writerows([f"{n:g}", f"{v:.17g}"] for n, v in zip(series.n, series.values))
    code = main(["fit", str(pilot), "--role", model.role.value, "--family", "auto", "--out", str(tmp_path)])
    assert code == 0
    fitted = json.loads((tmp_path / "rate_model.json").read_text())
    assert fitted["family"] == model.family.value
    assert fitted["scale"] == pytest.approx(model.scale, rel=1e-8)
    assert fitted["exponent"] == pytest.approx(model.exponent, rel=1e-8)

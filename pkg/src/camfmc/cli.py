"""Command-line front end: ``camfmc {fit,plan,estimate,benchmark,select}``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path


from .allocate import (
    Hierarchy,
    InfeasibleBudgetError,
    OrderingError,
    analytic_mse,
    check_ordering,
    optimal_allocation,
    reorder_models,
)
from .budget import ConvexityError, build_hierarchy
from .config import ConfigError, ExperimentConfig, load_config
from .engine import (
    BudgetExceededError,
    BudgetLedger,
    EvaluationError,
    derive_seed,
    mc_estimate,
    mfmc_estimate,
    run_ca_mfmc,
)
from .io import write_csv, write_json
from .rates import FitError, Role, fit_rate, read_pilot_csv, validate_rate
from .selection import select_models
from .stats import StatsError, replicate_mse

log = logging.getLogger("camfmc")

EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_EVALUATION = 4


class CommandError(RuntimeError):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise CommandError("--config is required")
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "replicates", None) is not None:
        if args.replicates < 1:
            raise CommandError("--replicates must be >= 1")
        cfg.replicates = args.replicates
    if getattr(args, "budget", None) is not None:
        cfg.budgets = [float(b) for b in args.budget]
    if not cfg.budgets:
        raise CommandError("no budget given (use --budget or 'budgets' in the config)")
    return cfg


# fit


def cmd_fit(args) -> int:
    series = read_pilot_csv(args.pilot, Role(args.role))
    report = fit_rate(series, args.family)
    problem = validate_rate(report.model)
    out = _out_dir(args)
    payload = {
        "source": str(args.pilot),
        **report.model.to_dict(),
        "fit": {
            "r_squared": report.r_squared,
            "residual_norm": report.residual_norm,
            "candidates": report.candidates,
            "points": int(series.n.size),
        },
        "valid": problem is None,
        "problem": problem,
    }
    write_json(out / "rate_model.json", payload)
    m = report.model
    print(
        f"{m.role.value}: {m.family.value} scale={m.scale:.10g} exponent={m.exponent:.10g} "
        f"R^2={report.r_squared:.6f}"
    )
    if problem:
        print(f"warning: fitted rate is not admissible: {problem}", file=sys.stderr)
    return 0


# plan


def _plan_for(cfg, p):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        plan = build_hierarchy(cfg.high_stats(), cfg.static_stats(), cfg.trainable_specs(), p)
    if not plan.residual_budget >= 1:
        raise CommandError(
            f"budget {p:g}: residual sampling budget {plan.residual_budget:g} after training "
            f"{plan.training_spent:g} cannot pay for one high-fidelity sample",
            EXIT_INFEASIBLE,
        )
    return plan


def _infeasible_message(plan, p, exc) -> str:
    lines = [f"budget {p:g} is infeasible: {exc}"]
    for s in plan.steps:
        lines.append(
            f"  {s.label}: n={s.n_feasible}, interval [1, {s.result.convexity.hi:g}], "
            f"remaining {s.budget_before:g} -> {s.budget_after:g}"
        )
    lines.append(f"  residual sampling budget {plan.residual_budget:g}")
    return "\n".join(lines)


def cmd_plan(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    reports, alloc_rows, split_rows = [], [], []
    for raw_p in cfg.budgets:
        p = cfg.normalize_budget(raw_p)
        plan = _plan_for(cfg, p)
        try:
            alloc = optimal_allocation(plan.hierarchy, plan.residual_budget)
        except InfeasibleBudgetError as exc:
            raise CommandError(_infeasible_message(plan, p, exc), EXIT_INFEASIBLE) from None
        mse = analytic_mse(plan.stats, p, plan.training_spent)
        mc = cfg.high_stats().variance / p
        train = {s.label: s.n_feasible for s in plan.steps}
        reports.append(
            {
                "budget": raw_p,
                "budget_normalized": p,
                "plan": plan.to_dict(),
                "allocation": alloc.to_dict(),
                "analytic_mse": mse,
                "mc_analytic_mse": mc,
            }
        )
        coeffs = (None,) + tuple(alloc.coefficients)
        for label, m, a in zip(plan.labels, alloc.counts, coeffs):
            alloc_rows.append([raw_p, label, train.get(label, 0), m, a])
        # costs in the same units as the budget
        to_raw = raw_p / p
        sampling = alloc.realized_cost
        split_rows.append(
            [
                raw_p,
                plan.training_spent * to_raw,
                sampling * to_raw,
                (p - plan.training_spent - sampling) * to_raw,
                plan.training_spent / p,
                sampling / p,
            ]
        )
    write_json(out / "plan.json", {"budget_units": cfg.budget_units, "plans": reports})
    write_csv(out / "allocation.csv", ["budget", "model", "n_train", "m", "alpha"], alloc_rows)
    write_csv(
        out / "budget_split.csv",
        ["budget", "training", "sampling", "unused", "training_share", "sampling_share"],
        split_rows,
    )
    for r in reports:
        steps = ", ".join(f"{s['label']}:{s['n_feasible']}" for s in r["plan"]["steps"])
        print(f"p={r['budget']:g} n*=[{steps}] mse={r['analytic_mse']:.6g}")
    return 0


# estimate


def _close(models):
    for m in models:
        close = getattr(m, "close", None)
        if close:
            close()


def _run_camfmc(cfg, p, seed, ledger):
    plan = _plan_for(cfg, p)
    high = cfg.high_model()
    statics = cfg.static_models(high)
    specs = {s.label: s for s in cfg.trainable_specs(with_trainers=True)}
    try:
        return run_ca_mfmc(
            plan,
            high,
            statics,
            specs,
            seed,
            bounds=cfg.bounds,
            stats_source=cfg.stats_source,
            pilot_samples=cfg.pilot_samples,
            charge_pilot=cfg.charge_pilot,
            ledger=ledger,
        ), plan
    finally:
        _close([high, *statics.values()])


def cmd_estimate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    raw_p = cfg.budgets[0]
    p = cfg.normalize_budget(raw_p)
    ledger = BudgetLedger(p, charge_pilot=cfg.charge_pilot)
    try:
        result, plan = _run_camfmc(cfg, p, derive_seed(cfg.seed, "estimate"), ledger)
    except (EvaluationError, BudgetExceededError) as exc:
        write_json(
            out / "estimate.json",
            {"status": "failed", "error": str(exc), "budget": raw_p, "ledger": ledger.to_dict()},
        )
        raise CommandError(f"estimation failed: {exc}", EXIT_EVALUATION) from None
    payload = {
        "status": "ok",
        "budget": raw_p,
        "budget_normalized": p,
        "seed": cfg.seed,
        "plan": plan.to_dict(),
        **result.to_dict(),
    }
    write_json(out / "estimate.json", payload)
    print(f"estimate={result.estimate:.17g} analytic_mse={result.analytic_mse:.6g}")
    return 0


# benchmark


def _mfmc_hierarchy(cfg):
    statics = cfg.static_stats()
    if not statics:
        return None
    labels = ["f0"] + [l for l, _ in statics]
    stats = [cfg.high_stats()] + [s for _, s in statics]
    if check_ordering(stats):
        hier, _ = reorder_models(stats, labels)
        return hier
    return Hierarchy(tuple(stats), tuple(labels))


def _replicate(cfg, estimator, p, seed, hier):
    if estimator == "mc":
        high = cfg.high_model()
        try:
            return mc_estimate(high, math.floor(p), seed, cfg.bounds)
        finally:
            _close([high])
    if estimator == "mfmc":
        high = cfg.high_model()
        models = {"f0": high, **cfg.static_models(high)}
        try:
            alloc = optimal_allocation(hier, p)
            return mfmc_estimate([models[l] for l in hier.labels], alloc, seed, cfg.bounds).estimate
        finally:
            _close(models.values())
    ledger = BudgetLedger(p, charge_pilot=cfg.charge_pilot)
    return _run_camfmc(cfg, p, seed, ledger)[0].estimate


def _reference(cfg, budgets):
    if cfg.reference is not None:
        return float(cfg.reference), "config"
    exact = cfg.exact_mean()
    if exact is not None:
        return exact, "exact"
    p = 10.0 * max(budgets)
    ledger = BudgetLedger(p, charge_pilot=cfg.charge_pilot)
    return _run_camfmc(cfg, p, derive_seed(cfg.seed, "reference"), ledger)[0].estimate, "camfmc"


def cmd_benchmark(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    n_rep = cfg.replicates
    if n_rep < 2:
        warnings.warn("fewer than 2 replicates; the empirical MSE is unreliable", RuntimeWarning)
        print("warning: fewer than 2 replicates", file=sys.stderr)
    hier = _mfmc_hierarchy(cfg)
    estimators = [e for e in cfg.estimators if e != "mfmc" or hier is not None]
    unknown = set(estimators) - {"mc", "mfmc", "camfmc"}
    if unknown:
        raise CommandError(f"unknown estimators {sorted(unknown)}")
    budgets = [(raw, cfg.normalize_budget(raw)) for raw in cfg.budgets]
    ref, ref_source = _reference(cfg, [p for _, p in budgets])
    sigma2 = cfg.high_stats().variance

    rows, rep_rows = [], []
    for e_idx, est in enumerate(estimators):
        for b_idx, (raw, p) in enumerate(budgets):
            if est == "mc":
                analytic = sigma2 / p
            elif est == "mfmc":
                analytic = analytic_mse(hier, p)
            else:
                plan = _plan_for(cfg, p)
                analytic = analytic_mse(plan.stats, p, plan.training_spent)
            seeds = [derive_seed(cfg.seed, "benchmark", est, b_idx, r) for r in range(n_rep)]

            def one(s, est=est, p=p):
                return _replicate(cfg, est, p, s, hier)

            if args.jobs > 1:
                with ThreadPoolExecutor(args.jobs) as pool:
                    values = list(pool.map(one, seeds))
            else:
                values = [one(s) for s in seeds]
            rows.append([est, raw, replicate_mse(values, ref), analytic])
            rep_rows.extend([est, raw, r, v] for r, v in enumerate(values))
            log.info("%s p=%g done", est, p)
    write_csv(out / "benchmark.csv", ["estimator", "budget", "empirical_mse", "analytic_mse"], rows)
    write_csv(out / "replicates.csv", ["estimator", "budget", "replicate", "estimate"], rep_rows)
    write_json(
        out / "benchmark.json",
        {
            "reference": ref,
            "reference_source": ref_source,
            "replicates": n_rep,
            "seed": cfg.seed,
            "budget_units": cfg.budget_units,
            "rows": [dict(zip(["estimator", "budget", "empirical_mse", "analytic_mse"], r)) for r in rows],
        },
    )
    for r in rows:
        print(f"{r[0]:>7} p={r[1]:g} empirical={r[2]:.6g} analytic={r[3]:.6g}")
    return 0


# select


def cmd_select(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    candidates = [("f0", cfg.high_stats())]
    candidates += cfg.static_stats()
    candidates += [(s.label, s) for s in cfg.trainable_specs()]
    to_raw = {cfg.normalize_budget(b): b for b in cfg.budgets}
    result = select_models(candidates, list(to_raw))
    write_csv(
        out / "selection.csv",
        ["subset", "budget", "analytic_mse"],
        [(name, to_raw[p], mse) for name, p, mse in result.rows()],
    )
    summary = result.to_dict()
    summary["budget_units"] = cfg.budget_units
    summary["largest_budget"] = max(cfg.budgets)
    write_json(out / "selection.json", summary)
    for item in summary["ranking"]:
        print(f"{item['rank']:>3} {item['subset']:<30} mse={item['mse_at_largest_budget']}")
    for item in summary["excluded"]:
        print(f"  excluded {item['subset']}: {item['reason']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camfmc",
        description="Context-aware multi-fidelity Monte Carlo estimation.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, budget=True, seed=False, reps=False):
        p.add_argument("--config", help="experiment configuration (JSON)")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        if budget:
            p.add_argument("--budget", type=float, action="append",
                           help="budget in config units; repeat for several")
        if seed:
            p.add_argument("--seed", type=int, help="override the config seed")
        if reps:
            p.add_argument("--replicates", type=int, help="replicates per cell")

    p = sub.add_parser("fit", help="fit a rate model to a pilot CSV (n,value)")
    p.add_argument("pilot", help="pilot CSV with header n,value")
    p.add_argument("--role", choices=["accuracy", "cost"], default="accuracy")
    p.add_argument("--family", choices=["algebraic", "exponential", "auto"], default="auto")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("plan", help="training sizes and sample allocation per budget")
    common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("estimate", help="run the context-aware estimator once")
    common(p, seed=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("benchmark", help="replicate MSE of mc, mfmc and camfmc")
    common(p, seed=True, reps=True)
    p.add_argument("--jobs", type=int, default=1, help="concurrent replicates")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("select", help="rank model subsets by analytic MSE")
    common(p)
    p.set_defaults(func=cmd_select)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InfeasibleBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, FitError, StatsError, OrderingError, ConvexityError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

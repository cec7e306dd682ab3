"""Command-line entry point: ``microdispatch solve | sweep | sample-wind``.

Exit codes: 0 success, 2 configuration or validation error, 3 solver
failure, 4 iteration cap reached (outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .admm import AdmmConfig, AdmmState, AdmmStatus, primal_residual, run_admm
from .central import PriceConditionError, solve_central_lmp, solve_central_saa_full
from .costs import NetCostReport, net_cost
from .model import (ConfigError, DispatchProblem, Schedule, case_study_path, problem_from_dict,
                    read_config_tree, validate_problem)
from .qpcore import QpError
from .windgen import CorrelationError, ScenarioSet, build_scenarios

log = logging.getLogger("microdispatch")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ITER_CAP = 0, 2, 3, 4
OUT_ENV = "MICRODISPATCH_OUT"
SOLVERS = ("admm", "central", "lmp")
CENTRAL_MAX_SAMPLES = 200


@dataclass(frozen=True)
class RunConfig:
    n_samples: int = 1000
    mean_samples: int = 20_000
    seed: int = 1
    rho: float = 1.0
    nu: float = 0.5
    eps_res: float = 1e-2
    max_iters: int = 500
    solver: str = "admm"
    init_strategy: str = "lower_bounds"
    ratios: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    alpha_scale: float = 5.0

    def admm_config(self) -> AdmmConfig:
        return AdmmConfig(rho=self.rho, nu=self.nu, eps_res=self.eps_res, max_iters=self.max_iters,
                          init_strategy=self.init_strategy)


def _run_config_from_tree(tree: dict[str, Any]) -> RunConfig:
    raw = tree.get("run", {})
    if not isinstance(raw, dict):
        raise ConfigError("field 'run' must be an object")
    known = {f.name: f for f in fields(RunConfig)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown field(s) {sorted(unknown)} in 'run'")
    kwargs: dict[str, Any] = {}
    defaults = RunConfig()
    for key, value in raw.items():
        default = getattr(defaults, key)
        try:
            if isinstance(default, tuple):
                kwargs[key] = tuple(float(v) for v in value)
            elif isinstance(default, str):
                kwargs[key] = str(value)
            else:
                kwargs[key] = type(default)(value)
        except (TypeError, ValueError):
            raise ConfigError(f"field 'run.{key}' has the wrong type") from None
    return RunConfig(**kwargs)


def resolve_config_path(path: str | None) -> Path:
    if path is None or path == "case_study":
        return case_study_path()
    return Path(path)


def parse_config(path: str | Path) -> tuple[DispatchProblem, RunConfig]:
    """Load a problem and its run parameters; raises ConfigError listing every problem found."""
    tree = read_config_tree(path)
    problem = problem_from_dict(tree)
    report = validate_problem(problem)
    if not report.ok:
        raise ConfigError(f"{path}: invalid problem", [str(v) for v in report.violations])
    return problem, _run_config_from_tree(tree)


def _check_run(run: RunConfig) -> None:
    problems = []
    if run.solver not in SOLVERS:
        problems.append(f"solver must be one of {SOLVERS}, got {run.solver!r}")
    if run.n_samples < 1:
        problems.append("n_samples must be at least 1")
    if run.mean_samples < run.n_samples:
        problems.append("mean_samples must be at least n_samples")
    if run.solver == "central" and run.n_samples > CENTRAL_MAX_SAMPLES:
        problems.append(f"central solver is limited to {CENTRAL_MAX_SAMPLES} scenarios (got {run.n_samples}); "
                        "lower --ns")
    try:
        run.admm_config()
    except ValueError as exc:
        problems.append(str(exc))
    if problems:
        raise ConfigError("invalid run parameters", problems)


def _apply_flags(run: RunConfig, args: argparse.Namespace) -> RunConfig:
    mapping = {"ns": "n_samples", "mean_samples": "mean_samples", "seed": "seed", "rho": "rho", "nu": "nu",
               "eps": "eps_res", "max_iters": "max_iters", "solver": "solver", "ratios": "ratios"}
    updates = {}
    for flag, name in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            updates[name] = value
    return replace(run, **updates)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_schedule_csv(path: Path, schedule: Schedule) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "unit_type", "unit_id", "power_kwh"])
        T = schedule.p_R.size
        for t in range(T):
            for m, row in enumerate(schedule.p_G):
                w.writerow([t + 1, "gen", m + 1, _fmt(row[t])])
            for n, row in enumerate(schedule.p_D):
                w.writerow([t + 1, "load", n + 1, _fmt(row[t])])
            w.writerow([t + 1, "wind", 1, _fmt(schedule.p_R[t])])


def read_schedule_csv(path: Path, n_gen: int, n_load: int, horizon: int) -> Schedule:
    p_G, p_D, p_R = np.zeros((n_gen, horizon)), np.zeros((n_load, horizon)), np.zeros(horizon)
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            t, unit = int(row["slot"]) - 1, int(row["unit_id"]) - 1
            value = float(row["power_kwh"])
            if row["unit_type"] == "gen":
                p_G[unit, t] = value
            elif row["unit_type"] == "load":
                p_D[unit, t] = value
            else:
                p_R[t] = value
    return Schedule(p_G, p_D, p_R)


def write_trace_csv(path: Path, state: AdmmState) -> None:
    T = state.lam.size
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "net_cost_cents", "xi_kwh"] + [f"lambda_t{t + 1}" for t in range(T)])
        for rec in state.trace:
            w.writerow([rec.k, _fmt(rec.net_cost), _fmt(rec.xi)] + [_fmt(v) for v in rec.lam])


def write_scenarios_csv(out: Path, scenarios: ScenarioSet) -> tuple[Path, Path]:
    scen_path, mean_path = out / "scenarios.csv", out / "means.csv"
    per_farm = scenarios.per_farm
    with scen_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "slot", "farm", "power_kwh"])
        n, I, T = per_farm.shape
        for s in range(n):
            for t in range(T):
                for i in range(I):
                    w.writerow([s + 1, t + 1, i + 1, _fmt(per_farm[s, i, t])])
    with mean_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "farm", "mean_kwh"])
        I, T = scenarios.means.shape
        for t in range(T):
            for i in range(I):
                w.writerow([t + 1, i + 1, _fmt(scenarios.means[i, t])])
    return scen_path, mean_path


@dataclass
class SolveResult:
    schedule: Schedule
    report: NetCostReport
    objective: float
    iterations: int
    xi: float
    converged: bool
    state: AdmmState | None = None


def solve(problem: DispatchProblem, scenarios: ScenarioSet, run: RunConfig) -> SolveResult:
    """Dispatch ``problem`` with the solver named in ``run``."""
    if run.solver == "admm":
        schedule, state = run_admm(problem, scenarios, run.admm_config())
        report = net_cost(schedule, problem, scenarios)
        return SolveResult(schedule, report, report.net_cost, state.k, state.xi,
                           state.status is AdmmStatus.CONVERGED, state)
    if run.solver == "central":
        schedule, objective, sol = solve_central_saa_full(problem, scenarios)
        iterations = sol.iterations
    else:
        problem = problem.with_prices(problem.prices.lmp())
        schedule, objective = solve_central_lmp(problem, scenarios.means)
        iterations = 0
    report = net_cost(schedule, problem, scenarios)
    xi = primal_residual(schedule.p_G, schedule.p_D, schedule.p_R, problem.demand)
    return SolveResult(schedule, report, objective, iterations, xi, True)


def _output_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV, "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args: argparse.Namespace) -> tuple[DispatchProblem, RunConfig]:
    problem, run = parse_config(resolve_config_path(args.config))
    run = _apply_flags(run, args)
    _check_run(run)
    return problem, run


def cmd_solve(args: argparse.Namespace) -> int:
    problem, run = _load(args)
    scenarios = build_scenarios(problem, run.n_samples, run.seed, run.mean_samples)
    out = _output_dir(args)
    start = time.perf_counter()
    result = solve(problem, scenarios, run)
    wall = time.perf_counter() - start

    solved_prices = problem.prices.lmp() if run.solver == "lmp" else problem.prices
    write_schedule_csv(out / "schedule.csv", result.schedule)
    if result.state is not None:
        write_trace_csv(out / "trace.csv", result.state)
    summary = {
        "solver": run.solver,
        "seed": run.seed,
        "n_samples": run.n_samples,
        "mean_samples": run.mean_samples,
        **asdict(result.report),
        "objective": result.objective,
        "iterations": result.iterations,
        "xi": result.xi,
        "converged": result.converged,
        "wall_time_s": wall,
        "alpha": list(solved_prices.alpha),
        "beta": list(solved_prices.beta),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    log.info("%s: net cost %.4f cents, %d iterations, xi %.3e", run.solver, result.report.net_cost,
             result.iterations, result.xi)
    if not result.converged:
        log.error("iteration cap %d reached with xi %.3e", run.max_iters, result.xi)
        return EXIT_ITER_CAP
    return EXIT_OK


def cmd_sweep_price_ratio(args: argparse.Namespace) -> int:
    problem, run = _load(args)
    if run.solver == "lmp":
        raise ConfigError("price-ratio sweep needs the admm or central solver")
    scenarios = build_scenarios(problem, run.n_samples, run.seed, run.mean_samples)
    out = _output_dir(args)
    base = problem.prices
    status = EXIT_OK
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ratio", "net_cost", "generation_cost", "utility", "transaction_cost"])
        fh.flush()
        for ratio in sorted(run.ratios):
            instance = problem.with_prices(base.scaled(run.alpha_scale, ratio))
            result = solve(instance, scenarios, run)
            rep = result.report
            w.writerow([_fmt(ratio), _fmt(rep.net_cost), _fmt(rep.generation_cost), _fmt(rep.load_utility),
                        _fmt(rep.transaction_cost)])
            fh.flush()
            log.info("ratio %.2f: net cost %.4f cents", ratio, rep.net_cost)
            if not result.converged:
                log.error("ratio %.2f hit the iteration cap", ratio)
                status = EXIT_ITER_CAP
    return status


def cmd_sample_wind(args: argparse.Namespace) -> int:
    problem, run = _load(args)
    scenarios = build_scenarios(problem, run.n_samples, run.seed, run.mean_samples)
    scen, means = write_scenarios_csv(_output_dir(args), scenarios)
    log.info("wrote %s and %s", scen, means)
    return EXIT_OK


def _ratios(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="case_study",
                        help="config JSON path, or 'case_study' for the built-in instance")
    common.add_argument("--ns", type=int, help="number of wind scenarios")
    common.add_argument("--mean-samples", type=int, dest="mean_samples",
                        help="trajectories drawn to estimate mean wind power")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./out)")
    common.add_argument("-v", "--verbose", action="store_true")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--solver", choices=SOLVERS)
    solver.add_argument("--rho", type=float)
    solver.add_argument("--nu", type=float)
    solver.add_argument("--eps", type=float, help="primal residual tolerance")
    solver.add_argument("--max-iters", type=int, dest="max_iters")

    parser = argparse.ArgumentParser(prog="microdispatch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", parents=[common, solver], help="solve one dispatch instance")
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("sweep", parents=[common, solver], help="sweep the selling-to-purchase price ratio")
    p.add_argument("--ratios", type=_ratios, help="comma-separated beta/alpha ratios")
    p.set_defaults(func=cmd_sweep_price_ratio)
    p = sub.add_parser("sample-wind", parents=[common], help="write wind scenarios and means as CSV")
    p.set_defaults(func=cmd_sample_wind)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, CorrelationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QpError, PriceConditionError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

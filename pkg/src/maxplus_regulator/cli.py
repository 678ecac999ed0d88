"""Command-line front end: config ingestion, pipelines, artifact emission.

One JSON config describes one experiment (problem matrices, optional M,
payoff, grids); subcommands run the pipelines and write deterministic JSON
and CSV artifacts (timings live under "timing" keys and are the only
non-reproducible fields).

Exit codes: 0 success or diagnosis, 1 input error, 2 numerical feasibility
error, 3 hypothesis-violation error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import convergence, duality, fundamental, grid_oracle, riccati, value_eval
from .duality import GridSpec
from .model import (FeasibilityError, GrowthBound, HypothesisError,
                    NonConvergenceError, PartitionedHessian, RegulatorProblem,
                    SpaceKind, StructuralError, as_matrix, validate_problem)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are input errors (exit 1)
        raise StructuralError(message)


# ---------------------------------------------------------------------------
# config loading
# ---------------------------------------------------------------------------

def _load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_problem(config: dict) -> RegulatorProblem:
    for key in ("A", "B", "Phi", "gamma"):
        if key not in config:
            raise StructuralError(f"config is missing {key!r}")
    problem = RegulatorProblem(config["A"], config["B"], config["Phi"], config["gamma"])
    violations = validate_problem(problem)
    if violations:
        raise StructuralError("invalid problem: " + "; ".join(violations))
    return problem


def _grid_from_dict(obj: dict) -> GridSpec:
    for key in ("lower", "upper", "spacing"):
        if key not in obj:
            raise StructuralError(f"grid object is missing {key!r}")
    return GridSpec(np.asarray(obj["lower"], dtype=float),
                    np.asarray(obj["upper"], dtype=float),
                    np.asarray(obj["spacing"], dtype=float))


def parse_grid_flag(text: str, dim: int) -> GridSpec:
    """'lo:hi:step' for every dimension, or ';'-separated per-dimension."""
    parts = text.split(";")
    if len(parts) == 1:
        parts = parts * dim
    if len(parts) != dim:
        raise StructuralError(f"grid spec {text!r} has {len(parts)} parts for dimension {dim}")
    lower, upper, spacing = [], [], []
    for part in parts:
        fields = part.split(":")
        if len(fields) != 3:
            raise StructuralError(f"grid spec part {part!r} is not lo:hi:step")
        lower.append(float(fields[0]))
        upper.append(float(fields[1]))
        spacing.append(float(fields[2]))
    return GridSpec(np.array(lower), np.array(upper), np.array(spacing))


def resolve_grid(args, flag: str, config: dict, key: str, dim: int,
                 default: GridSpec | None = None) -> GridSpec:
    text = getattr(args, flag, None)
    if text:
        return parse_grid_flag(text, dim)
    grids = config.get("grids", {})
    if key in grids:
        return _grid_from_dict(grids[key])
    if default is not None:
        return default
    raise StructuralError(f"no {key!r} grid given (flag --{flag.replace('_', '-')} or config grids.{key})")


def _growth_from(obj: dict | None) -> GrowthBound | None:
    if not obj:
        return None
    return GrowthBound(float(obj["r"]), float(obj.get("c", 0.0)))


def resolve_payoff(args, config: dict, config_dir: Path):
    """--payoff NAME|CSV wins over the config payoff object."""
    flag = getattr(args, "payoff", None)
    obj = config.get("payoff")
    if flag:
        if flag.endswith(".csv"):
            grid, values = duality.read_grid_csv(_resolve_path(flag, config_dir))
            growth = _growth_from((obj or {}).get("growth")) or _sampled_growth(grid, values)
            return duality.SampledPayoff(grid, values, growth)
        if flag == "quadratic":
            if not obj or "weight" not in obj:
                raise StructuralError("a quadratic payoff needs a weight matrix in the config")
            return duality.quadratic_payoff(obj["weight"], _growth_from(obj.get("growth")))
        return duality.named_payoff(flag, (obj or {}).get("params"),
                                    _growth_from((obj or {}).get("growth")))
    if not obj:
        raise StructuralError("no payoff given (flag --payoff or config payoff object)")
    if "csv" in obj:
        grid, values = duality.read_grid_csv(_resolve_path(obj["csv"], config_dir))
        growth = _growth_from(obj.get("growth")) or _sampled_growth(grid, values)
        return duality.SampledPayoff(grid, values, growth)
    name = obj.get("name")
    if name == "quadratic":
        if "weight" not in obj:
            raise StructuralError("a quadratic payoff needs a weight matrix")
        return duality.quadratic_payoff(obj["weight"], _growth_from(obj.get("growth")))
    if name is None:
        raise StructuralError("payoff object needs a 'name' or 'csv' key")
    return duality.named_payoff(name, obj.get("params"), _growth_from(obj.get("growth")))


def _sampled_growth(grid: GridSpec, values) -> GrowthBound:
    # tightest r = 1 bound covering the samples
    pts = grid.points()
    c = float(np.max(values - 0.5 * np.einsum("ij,ij->i", pts, pts)))
    return GrowthBound(1.0, c)


def _resolve_path(path, config_dir: Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else config_dir / p


def resolve_space(args, config: dict) -> SpaceKind:
    index = int(args.space)
    if index != 2:
        return SpaceKind(index)
    if getattr(args, "M", None):
        mmat = as_matrix(_load_json(args.M), "M")
    elif "M" in config:
        mmat = as_matrix(config["M"], "M")
    else:
        raise StructuralError("the semiconvex space needs M (flag --M or config key M)")
    return SpaceKind.semiconvex(mmat)


def _write_json(obj: dict, output: str | None) -> None:
    text = json.dumps(obj, indent=2)
    if output:
        Path(output).write_text(text + "\n")
    else:
        print(text)


def _enforce_growth(payoff, grid: GridSpec) -> None:
    problems = duality.check_growth(payoff, grid)
    if problems:
        raise HypothesisError("; ".join(problems))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve_dre(args) -> int:
    config = _load_json(args.config)
    problem = load_problem(config)
    if args.p0 == "zero":
        p0 = np.zeros((problem.n, problem.n))
    else:
        p0 = as_matrix(_load_json(args.p0), "P0")
    trajectory = riccati.dre_solve(problem, p0, args.horizon)
    last = trajectory[-1]
    residual = float(np.abs(last - trajectory[-2]).max()) if len(trajectory) > 1 else 0.0
    doc = {"horizon": args.horizon, "P_K": last.tolist(), "residual": residual}
    if args.trajectory:
        doc["trajectory"] = [p.tolist() for p in trajectory]
    _write_json(doc, args.output)
    return 0


def _propagate(problem, space, horizon):
    state = fundamental.initial_state(problem, space)
    result = fundamental.propagate(state, horizon, problem)
    q = fundamental.kernel_dual(result.state.theta, space)
    return result, q


def cmd_fundamental(args) -> int:
    config = _load_json(args.config)
    problem = load_problem(config)
    space = resolve_space(args, config)
    tic = time.perf_counter()
    result, q = _propagate(problem, space, args.horizon)
    wall = time.perf_counter() - tic
    doc = {
        "space": space.index,
        "horizon": result.state.horizon,
        "base_horizon": result.state.base_horizon,
        "compose_ops": result.compose_ops,
        "Theta": result.state.theta.blocks(),
        "Q": q.blocks(),
        "timing": {"wall_s": wall},
    }
    _write_json(doc, args.output)
    return 0


def _dual_of(payoff, space, zgrid, dual_xgrid):
    """Closed form for quadratics, exhaustive grid transform otherwise."""
    if isinstance(payoff, duality.QuadraticPayoff):
        return duality.quadratic_dual_on_grid(payoff.weight, space, zgrid)
    return duality.dual_transform(payoff, space, zgrid, dual_xgrid)


def cmd_value(args) -> int:
    config = _load_json(args.config)
    config_dir = Path(args.config).resolve().parent
    problem = load_problem(config)
    space = resolve_space(args, config)
    payoff = resolve_payoff(args, config, config_dir)
    zgrid = resolve_grid(args, "zgrid", config, "z", problem.n)
    dual_xgrid = resolve_grid(args, "dual_xgrid", config, "dual_x", problem.n, default=zgrid)
    xgrid = resolve_grid(args, "xgrid", config, "x", problem.n)
    _enforce_growth(payoff, dual_xgrid)

    tic = time.perf_counter()
    dual = _dual_of(payoff, space, zgrid, dual_xgrid)
    t_dual = time.perf_counter() - tic

    tic = time.perf_counter()
    state = fundamental.initial_state(problem, space)
    result = fundamental.propagate(state, args.horizon, problem)
    t_prop = time.perf_counter() - tic

    tic = time.perf_counter()
    q = fundamental.kernel_dual(result.state.theta, space)
    t_recover = time.perf_counter() - tic

    tic = time.perf_counter()
    values = value_eval.value_grid(q, dual, xgrid)
    t_value = time.perf_counter() - tic

    duality.write_grid_csv(f"{args.output}.csv", xgrid, values)
    doc = {
        "space": space.index,
        "horizon": result.state.horizon,
        "base_horizon": result.state.base_horizon,
        "compose_ops": result.compose_ops,
        "Q": q.blocks(),
        "timing": {"dual_s": t_dual, "propagate_s": t_prop,
                   "recover_s": t_recover, "value_s": t_value,
                   "total_s": t_dual + t_prop + t_recover + t_value},
    }
    _write_json(doc, f"{args.output}.json")
    return 0


def cmd_grid_dp(args) -> int:
    config = _load_json(args.config)
    config_dir = Path(args.config).resolve().parent
    problem = load_problem(config)
    payoff = resolve_payoff(args, config, config_dir)
    xgrid = resolve_grid(args, "xgrid", config, "x", problem.n)
    wgrid = resolve_grid(args, "wgrid", config, "w", problem.m)
    _enforce_growth(payoff, xgrid)
    step_seconds: list[float] = []
    values = grid_oracle.dp_solve(payoff.sample_on(xgrid), args.horizon, problem,
                                  wgrid, xgrid, step_seconds=step_seconds)
    duality.write_grid_csv(f"{args.output}.csv", xgrid, values)
    _write_json({"horizon": args.horizon,
                 "timing": {"step_s": step_seconds, "total_s": sum(step_seconds)}},
                f"{args.output}.json")
    return 0


def cmd_converge(args) -> int:
    config = _load_json(args.config)
    config_dir = Path(args.config).resolve().parent
    problem = load_problem(config)
    space = resolve_space(args, config)
    tic = time.perf_counter()
    state = fundamental.initial_state(problem, space)
    try:
        report = convergence.doubling_limit(state.theta, base_horizon=state.base_horizon)
    except (FeasibilityError, NonConvergenceError) as err:
        margins = convergence.convergence_margins(state.theta)
        if margins.feasible:
            raise
        doc = _report_doc(margins.sigma, margins.lam, margins.rho, False, [],
                          note=f"doubling did not converge: {err}")
        doc["timing"] = {"wall_s": time.perf_counter() - tic}
        _write_json(doc, f"{args.output}.json" if args.output else None)
        return 0

    q_inf = convergence.primal_limit(report.theta_inf, space)
    doc = _report_doc(report.sigma, report.lam, report.rho, report.feasible, report.trace)
    doc["Theta_inf"] = report.theta_inf.blocks()
    doc["Q_inf"] = q_inf.blocks()

    has_payoff = bool(getattr(args, "payoff", None)) or "payoff" in config
    if has_payoff:
        if not args.output:
            raise StructuralError("--output is required when a payoff is given")
        payoff = resolve_payoff(args, config, config_dir)
        zgrid = resolve_grid(args, "zgrid", config, "z", problem.n)
        dual_xgrid = resolve_grid(args, "dual_xgrid", config, "dual_x", problem.n,
                                  default=zgrid)
        _enforce_growth(payoff, dual_xgrid)
        dual = _dual_of(payoff, space, zgrid, dual_xgrid)
        kappa = convergence.limit_offset(dual, q_inf.q22, eps0=args.eps0, r0=args.r0)
        report.kappa = kappa
        doc["kappa"] = kappa
        xgrid = resolve_grid(args, "xgrid", config, "x", problem.n)
        w_inf = value_eval.infinite_horizon_grid(q_inf.q11, kappa, xgrid)
        duality.write_grid_csv(f"{args.output}.csv", xgrid, w_inf)
    doc["timing"] = {"wall_s": time.perf_counter() - tic}
    _write_json(doc, f"{args.output}.json" if args.output else None)
    return 0


def _report_doc(sigma, lam, rho, feasible, trace, note=None) -> dict:
    doc = {
        "sigma": sigma,
        "lambda": lam,
        "rho": rho,
        "feasible": feasible,
        "trace": [{"horizon": r.horizon, "sigma": r.sigma, "lambda": r.lam,
                   "off_norm": r.off_norm} for r in trace],
        "Theta_inf": None,
        "Q_inf": None,
        "kappa": None,
        "notes": ["continuity of a sampled dual payoff is not checkable on a grid; "
                  "only the coercivity margin and boundedness are verified"],
    }
    if note:
        doc["notes"].append(note)
    return doc


def cmd_bench(args) -> int:
    config = _load_json(args.config)
    config_dir = Path(args.config).resolve().parent
    problem = load_problem(config)
    space = resolve_space(args, config)
    payoff = resolve_payoff(args, config, config_dir)
    zgrid = resolve_grid(args, "zgrid", config, "z", problem.n)
    dual_xgrid = resolve_grid(args, "dual_xgrid", config, "dual_x", problem.n, default=zgrid)
    xgrid = resolve_grid(args, "xgrid", config, "x", problem.n)
    wgrid = resolve_grid(args, "wgrid", config, "w", problem.m)
    horizons = [int(tok) for tok in args.horizons.split(",") if tok]
    if not horizons:
        raise StructuralError("--horizons must list at least one horizon")
    psi_samples = payoff.sample_on(xgrid)
    records = []
    for k in horizons:
        tic = time.perf_counter()
        grid_oracle.dp_solve(psi_samples, k, problem, wgrid, xgrid)
        grid_s = time.perf_counter() - tic

        tic = time.perf_counter()
        dual = _dual_of(payoff, space, zgrid, dual_xgrid)
        state = fundamental.initial_state(problem, space)
        result = fundamental.propagate(state, k, problem)
        q = fundamental.kernel_dual(result.state.theta, space)
        value_eval.value_grid(q, dual, xgrid)
        maxplus_s = time.perf_counter() - tic
        records.append({"horizon": k, "compose_ops": result.compose_ops,
                        "grid_s": grid_s, "maxplus_s": maxplus_s})
    _write_json({"records": records}, args.output)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maxplus-regulator",
                     description="Linear regulator solvers built on max-plus "
                                 "fundamental solutions, with Riccati and "
                                 "grid-DP benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="JSON experiment config")
        p.add_argument("--output", help="output path (prefix for CSV+JSON commands)")

    p = sub.add_parser("solve-dre", help="difference Riccati recursion")
    common(p)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--p0", default="zero", help="'zero' or a JSON matrix file")
    p.add_argument("--trajectory", action="store_true", help="emit every P_k")
    p.set_defaults(func=cmd_solve_dre)

    p = sub.add_parser("fundamental", help="kernel Hessians by horizon doubling")
    common(p)
    p.add_argument("--space", choices=("1", "2", "3"), required=True)
    p.add_argument("--M", help="JSON matrix file for the semiconvex space")
    p.add_argument("--horizon", type=int, required=True)
    p.set_defaults(func=cmd_fundamental)

    p = sub.add_parser("value", help="finite-horizon value function on a grid")
    common(p)
    p.add_argument("--space", choices=("1", "2", "3"), required=True)
    p.add_argument("--M")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--payoff", help="registry name or CSV path")
    p.add_argument("--zgrid", help="dual grid, lo:hi:step[;per-dim]")
    p.add_argument("--dual-xgrid", dest="dual_xgrid", help="maximization grid for the dual")
    p.add_argument("--xgrid", help="evaluation grid")
    p.set_defaults(func=cmd_value)

    p = sub.add_parser("grid-dp", help="grid-based dynamic programming benchmark")
    common(p)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--payoff")
    p.add_argument("--xgrid")
    p.add_argument("--wgrid")
    p.set_defaults(func=cmd_grid_dp)

    p = sub.add_parser("converge", help="infinite-horizon limit and payoff offset")
    common(p)
    p.add_argument("--space", choices=("1", "2", "3"), required=True)
    p.add_argument("--M")
    p.add_argument("--payoff")
    p.add_argument("--zgrid")
    p.add_argument("--dual-xgrid", dest="dual_xgrid")
    p.add_argument("--xgrid")
    p.add_argument("--eps0", type=float, default=1e-3, help="coercivity margin")
    p.add_argument("--r0", type=float, default=None,
                   help="radius beyond which the margin is checked "
                        "(default: half the dual-grid radius)")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("bench", help="grid method vs max-plus method timings")
    common(p)
    p.add_argument("--space", choices=("1", "2", "3"), default="1")
    p.add_argument("--M")
    p.add_argument("--horizons", required=True, help="comma-separated horizons")
    p.add_argument("--payoff")
    p.add_argument("--zgrid")
    p.add_argument("--dual-xgrid", dest="dual_xgrid")
    p.add_argument("--xgrid")
    p.add_argument("--wgrid")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ValueError, OSError, KeyError) as err:    # includes StructuralError / JSON errors
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (FeasibilityError, NonConvergenceError) as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return 2
    except HypothesisError as err:
        print(f"hypothesis violated: {err}", file=sys.stderr)
        return 3


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())

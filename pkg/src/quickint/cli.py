"""Command-line entry point: ``quickint <command> --config cfg.json``.

The config is a JSON object. Its ``"spec"`` entry is either a full problem
document (keys ``Z, A, alpha, betas, c_p, c_i, rho, lambda``) or
``{"family": "paper", "delta": d, "rho": r, "lambda": l}``. A config file
that is itself a problem document is accepted too. Optional sections:
``grid``, ``sim``, ``policy``, ``sweep``, ``anomaly``, ``h_grid``,
``strictness``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiments import (
    DEFAULT_H_GRID,
    AnomalyConfig,
    SweepBase,
    anomaly_experiment,
    default_sweep_values,
    regret_sweep,
    report_row,
    rows_to_csv,
)
from .grid_solver import (
    GridConfig,
    Interpolation,
    Representative,
    closed_form_VA,
    extract_thresholds,
    solve_grid,
    value_at,
)
from .local_approx import approx_total_cost, solve_approx, threshold_bounds
from .model import (
    ProblemSpec,
    Strictness,
    kl_divergence,
    local_regime_report,
    make_paper_family,
    validate_spec,
)
from .policies import (
    POLICY_NAMES,
    GridOptimal,
    LowComplexity,
    Oracle,
    Qcd,
    low_complexity_policy,
)
from .simulator import SimOptions, estimate_cost, tune_qcd

log = logging.getLogger("quickint")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class ConfigError(Exception):
    pass


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if "Z" in doc:
        doc = {"spec": doc}
    return doc


def spec_from_config(cfg: dict) -> ProblemSpec:
    raw = cfg.get("spec", {"family": "paper", "delta": 0.02})
    if not isinstance(raw, dict):
        raise ConfigError("'spec' must be an object")
    inline = "Z" in raw
    family = "family" in raw
    if inline == family:
        raise ConfigError("'spec' needs exactly one of an inline problem or a 'family'")
    try:
        if inline:
            return ProblemSpec.from_dict(raw)
        if raw["family"] != "paper":
            raise ConfigError(f"unknown family {raw['family']!r}")
        return make_paper_family(float(raw.get("delta", 0.02)),
                                 rho=float(raw.get("rho", 0.99)),
                                 lam=float(raw.get("lambda", 0.03)))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad problem spec: {exc}") from exc


def grid_from_config(cfg: dict, args) -> GridConfig:
    g = dict(cfg.get("grid", {}))
    if args.grid_n is not None:
        g["num_cells"] = args.grid_n
    return GridConfig(
        num_cells=int(g.get("num_cells", 1000)),
        representative=Representative(g.get("representative", "midpoint")),
        epsilon=float(g.get("epsilon", 1e-8)),
        interpolation=Interpolation(g.get("interpolation", "linear")),
        max_sweeps=int(g.get("max_sweeps", 100_000)),
    )


def sim_from_config(cfg: dict, args, **defaults) -> SimOptions:
    s = {**defaults, **cfg.get("sim", {})}
    if args.runs is not None:
        s["n_runs"] = args.runs
    if args.seed is not None:
        s["seed"] = args.seed
    if args.unconstrained:
        s["constrained"] = False
    return SimOptions(n_runs=int(s.get("n_runs", 10_000)), seed=int(s.get("seed", 0)),
                      constrained=bool(s.get("constrained", True)),
                      fixed_horizon=s.get("fixed_horizon"))


def emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")


def cmd_validate(cfg, args) -> int:
    spec = spec_from_config(cfg)
    strictness = Strictness(cfg.get("strictness", "strict"))
    report = validate_spec(spec, strictness)
    regime = local_regime_report(spec)
    print(report.format(), file=sys.stderr)
    print(f"local regime: delta_eff={regime.delta_eff:.6g} "
          f"gamma_eff={regime.gamma_eff:.6g}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_solve(cfg, args) -> int:
    spec = spec_from_config(cfg)
    sol = solve_grid(spec, grid_from_config(cfg, args))
    doc = sol.to_dict()
    doc["thresholds"] = extract_thresholds(sol).to_dict()
    doc["V_A_closed_form"] = closed_form_VA(spec)
    doc["optimal_cost"] = value_at(spec, sol, 0.0, 0)
    emit(json.dumps(doc), args.out)
    return EXIT_OK


def cmd_approx(cfg, args) -> int:
    spec = spec_from_config(cfg)
    g = dict(cfg.get("grid", {}))
    grid = GridConfig(num_cells=int(args.grid_n or g.get("num_cells", 10_000)),
                      epsilon=float(g.get("epsilon", 1e-10)),
                      max_sweeps=int(g.get("max_sweeps", 100_000)))
    sol = solve_approx(spec, grid)
    doc = sol.to_dict()
    doc["bounds"] = threshold_bounds(spec).to_dict()
    try:
        doc["closed_form_cost"] = approx_total_cost(spec, sol.policy)
    except ValueError as exc:
        log.warning("closed-form cost unavailable: %s", exc)
        doc["closed_form_cost"] = None
    emit(json.dumps(doc), args.out)
    return EXIT_OK


def cmd_thresholds(cfg, args) -> int:
    spec = spec_from_config(cfg)
    doc = {
        "low_complexity": low_complexity_policy(spec).to_dict(),
        "bounds": threshold_bounds(spec).to_dict(),
    }
    emit(json.dumps(doc), args.out)
    return EXIT_OK


def build_policy(name: str, spec: ProblemSpec, cfg: dict, args, opts: SimOptions):
    if name == "low":
        return LowComplexity(low_complexity_policy(spec))
    if name == "grid":
        return GridOptimal(solve_grid(spec, grid_from_config(cfg, args)))
    if name == "oracle":
        return Oracle()
    if name in ("qcd", "dqcd"):
        direct = name == "dqcd"
        if "h" in cfg:
            return Qcd(float(cfg["h"]), direct)
        best_h, _ = tune_qcd(spec, direct, cfg.get("h_grid", DEFAULT_H_GRID), opts)
        log.info("tuned %s alarm level h=%g", name, best_h)
        return Qcd(best_h, direct)
    raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")


def cmd_simulate(cfg, args) -> int:
    spec = spec_from_config(cfg)
    opts = sim_from_config(cfg, args)
    names = [args.policy] if args.policy else cfg.get("policies", [cfg.get("policy", "low")])
    kl = kl_divergence(spec.alpha, spec.betas[0])
    rows = []
    for name in names:
        report = estimate_cost(spec, build_policy(name, spec, cfg, args, opts), opts)
        rows.append(report_row("none", float("nan"), kl, name, report, opts.seed))
    emit(rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_sweep(cfg, args) -> int:
    sweep = cfg.get("sweep", {})
    param = sweep.get("param", "delta")
    values = sweep.get("values") or default_sweep_values(param,
                                                         int(sweep.get("per_decade", 20)))
    base = None
    if "base" in sweep:
        b = sweep["base"]
        base = SweepBase(delta=float(b.get("delta", 0.02)), rho=float(b.get("rho", 0.95)),
                         lam=float(b.get("lambda", 0.1)))
    opts = sim_from_config(cfg, args)
    policies = sweep.get("policies", ["low", "grid", "qcd", "dqcd"])
    rows = regret_sweep(param, values, policies, opts, base=base,
                        grid_cfg=grid_from_config(cfg, args),
                        h_grid=cfg.get("h_grid", DEFAULT_H_GRID),
                        include_approx=bool(sweep.get("approx", True)))
    emit(rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_anomaly(cfg, args) -> int:
    a = cfg.get("anomaly", {})
    defaults = AnomalyConfig()
    run_cfg = AnomalyConfig(
        lambdas=tuple(a.get("lambdas", defaults.lambdas)),
        n_runs=int(args.runs if args.runs is not None else a.get("n_runs", defaults.n_runs)),
        seed=int(args.seed if args.seed is not None else a.get("seed", defaults.seed)),
        horizon=int(a.get("horizon", defaults.horizon)),
        delta=float(a.get("delta", defaults.delta)),
        policy_rho=float(a.get("policy_rho", defaults.policy_rho)),
        fixed_h=float(a.get("fixed_h", defaults.fixed_h)),
        h_grid=tuple(cfg.get("h_grid", defaults.h_grid)),
        grid_cells=int(args.grid_n or a.get("grid_cells", defaults.grid_cells)),
    )
    emit(rows_to_csv(anomaly_experiment(run_cfg)), args.out)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "approx": cmd_approx,
    "thresholds": cmd_thresholds,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "anomaly": cmd_anomaly,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quickint", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config or problem spec")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--runs", type=int, help="Monte Carlo episodes")
        p.add_argument("--grid-n", type=int, help="number of belief cells")
        p.add_argument("--unconstrained", action="store_true",
                       help="allow any action change per step")
        if name == "simulate":
            p.add_argument("--policy", choices=POLICY_NAMES)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Parameter sweeps and the fixed-horizon anomaly experiment, emitted as CSV rows."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid_solver import GridConfig, solve_finite_horizon, solve_grid
from .local_approx import APPROX_CONFIG, approx_total_cost, solve_approx
from .model import kl_divergence, make_paper_family
from .policies import (
    FiniteHorizonOptimal,
    GridOptimal,
    LowComplexity,
    Oracle,
    Qcd,
    low_complexity_policy,
)
from .simulator import (
    CostReport,
    SimOptions,
    estimate_cost,
    reference_cost,
    tune_qcd,
)

log = logging.getLogger(__name__)

CSV_COLUMNS = ("param_name", "param_value", "kl_alpha_beta0", "policy", "n_runs",
               "mean_cost", "stderr", "ci_lo", "ci_hi", "regret", "seed")
MAX_DELTA = 0.03
DEFAULT_H_GRID = tuple(np.round(np.linspace(0.05, 0.95, 25), 6))


@dataclass(frozen=True)
class SweepBase:
    """Fixed parameters of the reference family while one of them is swept."""

    delta: float = 0.02
    rho: float = 0.95
    lam: float = 0.1


SWEEP_DEFAULTS = {
    "rho": SweepBase(delta=0.02, lam=0.1),
    "lambda": SweepBase(delta=0.2, rho=0.95),
    "delta": SweepBase(rho=0.95, lam=0.1),
}


def log_points(lo: float, hi: float, per_decade: int = 20) -> list[float]:
    count = max(2, int(round(math.log10(hi / lo) * per_decade)) + 1)
    return [float(v) for v in np.logspace(math.log10(lo), math.log10(hi), count)]


def default_sweep_values(param: str, per_decade: int = 20) -> list[float]:
    if param == "rho":
        # the sweep axis is 1 - rho in [1e-4, 1]; rho = 0 itself is not a valid model
        return [max(1.0 - g, 1e-6) for g in log_points(1e-4, 1.0, per_decade)]
    if param == "lambda":
        return log_points(1e-4, 1.0, per_decade)
    if param == "delta":
        return log_points(1e-4, MAX_DELTA, per_decade)
    raise ValueError(f"unknown sweep parameter {param!r}")


def clamp_delta(delta: float) -> float:
    if delta >= MAX_DELTA:
        log.warning("delta=%g leaves the family's positive range; clamped to %g",
                    delta, MAX_DELTA)
        return MAX_DELTA
    return delta


def family_spec(param: str, value: float, base: SweepBase):
    delta, rho, lam = base.delta, base.rho, base.lam
    if param == "rho":
        rho = value
    elif param == "lambda":
        lam = value
    elif param == "delta":
        delta = value
    else:
        raise ValueError(f"unknown sweep parameter {param!r}")
    return make_paper_family(clamp_delta(delta), rho=rho, lam=lam)


def report_row(param: str, value: float, kl: float, policy: str,
               report: CostReport | None, seed: int) -> dict:
    if report is None:
        nan = float("nan")
        return dict(param_name=param, param_value=value, kl_alpha_beta0=kl, policy=policy,
                    n_runs=0, mean_cost=nan, stderr=nan, ci_lo=nan, ci_hi=nan, regret=nan,
                    seed=seed)
    return dict(param_name=param, param_value=value, kl_alpha_beta0=kl, policy=policy,
                n_runs=report.n_runs, mean_cost=report.mean_cost, stderr=report.std_err,
                ci_lo=report.ci95[0], ci_hi=report.ci95[1], regret=report.regret, seed=seed)


def approx_row(param, value, kl, spec, reference, seed) -> dict:
    """Deterministic pseudo-policy row with the approximated optimal cost."""
    sol = solve_approx(spec, APPROX_CONFIG)
    try:
        cost = approx_total_cost(spec, sol.policy)
    except ValueError:
        # some level never switches on; the tabulated value is the same quantity
        cost = sol.value_at_zero
    return dict(param_name=param, param_value=value, kl_alpha_beta0=kl, policy="approx",
                n_runs=0, mean_cost=cost, stderr=0.0, ci_lo=cost, ci_hi=cost,
                regret=cost - reference, seed=seed)


def evaluate_policies(spec, names, opts: SimOptions, grid_cfg: GridConfig,
                      h_grid) -> dict[str, CostReport]:
    """Reports for each named policy on common episodes."""
    out = {}
    for name in names:
        if name == "low":
            out[name] = estimate_cost(spec, LowComplexity(low_complexity_policy(spec)), opts)
        elif name == "grid":
            out[name] = estimate_cost(spec, GridOptimal(solve_grid(spec, grid_cfg)), opts)
        elif name in ("qcd", "dqcd"):
            _, out[name] = tune_qcd(spec, name == "dqcd", h_grid, opts)
        elif name == "oracle":
            out[name] = estimate_cost(spec, Oracle(), opts)
        else:
            raise ValueError(f"unknown policy {name!r}")
    return out


def regret_sweep(param: str, values, policies, opts: SimOptions,
                 base: SweepBase | None = None, grid_cfg: GridConfig = GridConfig(),
                 h_grid=DEFAULT_H_GRID, include_approx: bool = True) -> list[dict]:
    """One row per (parameter value, policy); failures give NaN rows and the sweep goes on."""
    base = base or SWEEP_DEFAULTS[param]
    rows = []
    for value in values:
        try:
            spec = family_spec(param, value, base)
        except ValueError as exc:
            log.error("%s=%g gives no valid model: %s", param, value, exc)
            names = list(policies) + (["approx"] if include_approx else [])
            rows.extend(report_row(param, value, float("nan"), name, None, opts.seed)
                        for name in names)
            continue
        kl = kl_divergence(spec.alpha, spec.betas[0])
        reference = reference_cost(spec, opts)
        for name in policies:
            try:
                report = evaluate_policies(spec, [name], opts, grid_cfg, h_grid)[name]
            except (ValueError, RuntimeError) as exc:
                log.error("%s=%g policy %s failed: %s", param, value, name, exc)
                report = None
            rows.append(report_row(param, value, kl, name, report, opts.seed))
        if include_approx:
            try:
                rows.append(approx_row(param, value, kl, spec, reference, opts.seed))
            except (ValueError, RuntimeError) as exc:
                log.error("%s=%g approximation failed: %s", param, value, exc)
                rows.append(report_row(param, value, kl, "approx", None, opts.seed))
    return rows


@dataclass(frozen=True)
class AnomalyConfig:
    lambdas: tuple[float, ...] = (0.01, 0.03, 0.1, 0.3)
    n_runs: int = 20_000
    seed: int = 0
    horizon: int = 50
    delta: float = 0.02
    policy_rho: float = 0.98
    fixed_h: float = 0.99
    h_grid: tuple[float, ...] = field(default=DEFAULT_H_GRID)
    grid_cells: int = 1000


def anomaly_experiment(cfg: AnomalyConfig = AnomalyConfig()) -> list[dict]:
    """Fixed horizon, unrestricted action changes, total cost per policy and lambda.

    Policies: the low-complexity thresholds computed with ``policy_rho``,
    backward-induction optimum, Shiryaev alarm at a fixed level, and Shiryaev
    alarm with the level tuned on the same episodes. Alarms jump straight to
    the strictest level since nothing restricts the action changes.
    """
    opts = SimOptions(n_runs=cfg.n_runs, seed=cfg.seed, constrained=False,
                      fixed_horizon=cfg.horizon)
    rows = []
    for lam in cfg.lambdas:
        spec = make_paper_family(cfg.delta, rho=cfg.policy_rho, lam=lam)
        kl = kl_divergence(spec.alpha, spec.betas[0])
        fh = solve_finite_horizon(spec, cfg.horizon, GridConfig(num_cells=cfg.grid_cells),
                                  constrained=False)
        reports = {
            "low": estimate_cost(spec, LowComplexity(low_complexity_policy(spec)), opts),
            "fh": estimate_cost(spec, FiniteHorizonOptimal(fh), opts),
            "qcd-fixed": estimate_cost(spec, Qcd(cfg.fixed_h, direct=True), opts),
        }
        _, reports["qcd-tuned"] = tune_qcd(spec, True, cfg.h_grid, opts)
        for name, report in reports.items():
            rows.append(report_row("lambda", lam, kl, name, report, cfg.seed))
    return rows


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()

"""Monte Carlo evaluation of intervention policies.

Timeline of one episode: at ``t = 0`` the belief is 0, the level is 0 and the
agent pays ``c_i[a_0]``. For ``t = 1..T-1`` an observation is drawn from
``alpha`` before the change point and from ``beta_{a_{t-1}}`` after it, the
belief is updated under ``a_{t-1}``, and the agent picks ``a_t`` and pays
``c_p[z_t] + c_i[a_t]``.

Episodes are simulated in vectorized batches; each episode's randomness
comes from its own substreams (see :mod:`quickint.rng`), so any batch size
or worker count yields identical per-episode costs.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .belief import update
from .model import ProblemSpec
from .policies import (
    Oracle,
    Policy,
    Qcd,
    oracle_cost_closed_form,
    oracle_cost_fixed_horizon,
)

log = logging.getLogger(__name__)

BATCH = 8192
BLOCK = 128  # observation uniforms fetched per episode at a time


@dataclass(frozen=True)
class SimOptions:
    """``fixed_horizon=None`` draws a geometric horizon from ``rho``."""

    n_runs: int = 10_000
    seed: int = 0
    constrained: bool = True
    fixed_horizon: int | None = None

    def __post_init__(self) -> None:
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        if self.fixed_horizon is not None and self.fixed_horizon < 1:
            raise ValueError("fixed horizon must be at least 1")


@dataclass(frozen=True)
class EpisodeResult:
    hidden_T: int
    hidden_tau: int
    actions: tuple[int, ...]  # a_0 .. a_{T-1}
    observations: tuple[int, ...]  # z_1 .. z_{T-1}, 0-based
    total_cost: float


@dataclass(frozen=True)
class CostReport:
    n_runs: int
    mean_cost: float
    std_err: float
    ci95: tuple[float, float]
    regret: float
    seed: int
    costs: np.ndarray = field(repr=False, compare=False)
    constraint_violations: int = 0


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("QI_THREADS", "1")))
    except ValueError:
        return 1


def _draw_hidden(spec: ProblemSpec, opts: SimOptions, episodes: np.ndarray):
    u_T = np.array([rng.open_unit(rng.substream(opts.seed, int(e), rng.HORIZON))
                    for e in episodes])
    u_tau = np.array([rng.open_unit(rng.substream(opts.seed, int(e), rng.CHANGE_POINT))
                      for e in episodes])
    if opts.fixed_horizon is None:
        T = rng.geometric(u_T, math.log(spec.rho))
    else:
        T = np.full(episodes.shape, opts.fixed_horizon, dtype=np.int64)
    log_q = -math.inf if spec.lam >= 1.0 else math.log1p(-spec.lam)
    tau = rng.geometric(u_tau, log_q)
    return T, tau


def _simulate(spec: ProblemSpec, policy: Policy, opts: SimOptions, episodes: np.ndarray,
              record: bool = False):
    """Costs of the given episode indices; optionally the full trajectories."""
    n = episodes.shape[0]
    num_levels = spec.num_actions + 1
    T, tau = _draw_hidden(spec, opts, episodes)
    cdf = np.cumsum(np.vstack([spec.alpha, spec.betas]), axis=1)[:, :-1]
    c_p, c_i = spec.c_p, spec.c_i
    hidden = dict(tau=tau, horizon=T) if policy.needs_hidden else {}

    pi = np.zeros(n)
    level = np.zeros(n, dtype=np.int64)
    declared = np.zeros(n, dtype=bool)
    a = policy.actions(pi, level, declared, 0, opts.constrained, num_levels, **hidden)
    a = np.asarray(a, dtype=np.int64)
    declared |= policy.declares(pi)
    violations = 0
    if opts.constrained and not isinstance(policy, Oracle):
        violations += int(np.count_nonzero((a < level) | (a > level + 1)))
    cost = c_i[a].astype(np.float64)
    level = a
    traj_a = [[int(x)] for x in a] if record else None
    traj_z = [[] for _ in range(n)] if record else None

    idx = np.arange(n)  # positions (into the batch) of still-running episodes
    gens = np.empty(n, dtype=object)
    gens[:] = [rng.substream(opts.seed, int(e), rng.OBSERVATION) for e in episodes]
    block = np.empty((n, BLOCK))
    out_cost = cost.copy()

    t = 1
    while idx.size:
        keep = T[idx] > t
        if not keep.all():
            out_cost[idx[~keep]] = cost[~keep]
            idx, cost, pi, level, declared = (idx[keep], cost[keep], pi[keep],
                                              level[keep], declared[keep])
            block = block[keep]
            if not idx.size:
                break
        col = (t - 1) % BLOCK
        if col == 0:
            block = np.stack([g.random(BLOCK) for g in gens[idx]])
        u = block[:, col]
        changed = t >= tau[idx]
        row = np.where(changed, 1 + level, 0)
        z = np.count_nonzero(u[:, None] >= cdf[row], axis=1)
        pi = update(spec, pi, level, z)
        if policy.needs_hidden:
            hidden = dict(tau=tau[idx], horizon=T[idx])
        a = np.asarray(policy.actions(pi, level, declared, t, opts.constrained, num_levels,
                                      **hidden), dtype=np.int64)
        declared |= policy.declares(pi)
        if opts.constrained and not isinstance(policy, Oracle):
            violations += int(np.count_nonzero((a < level) | (a > level + 1)))
        cost = cost + (c_p[z] + c_i[a])
        level = a
        if record:
            for k, i in enumerate(idx):
                traj_a[i].append(int(a[k]))
                traj_z[i].append(int(z[k]))
        t += 1
    if record:
        return out_cost, violations, (T, tau, traj_a, traj_z)
    return out_cost, violations, None


def run_episode(spec: ProblemSpec, policy: Policy, opts: SimOptions,
                episode: int = 0) -> EpisodeResult:
    """One fully recorded episode from stream ``(opts.seed, episode)``."""
    cost, _, (T, tau, acts, obs) = _simulate(spec, policy, opts, np.array([episode]),
                                             record=True)
    return EpisodeResult(int(T[0]), int(tau[0]), tuple(acts[0]), tuple(obs[0]),
                         float(cost[0]))


def recompute_cost(spec: ProblemSpec, result: EpisodeResult) -> float:
    """Cost of a recorded trajectory, summed in the simulator's order."""
    total = float(spec.c_i[result.actions[0]])
    for z, a in zip(result.observations, result.actions[1:]):
        total = total + (float(spec.c_p[z]) + float(spec.c_i[a]))
    return total


def simulate_costs(spec: ProblemSpec, policy: Policy, opts: SimOptions):
    """Per-episode costs for episodes ``0..n_runs-1`` plus the constraint-violation count."""
    chunks = [np.arange(s, min(s + BATCH, opts.n_runs))
              for s in range(0, opts.n_runs, BATCH)]
    workers = min(worker_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _simulate(spec, policy, opts, c), chunks))
    else:
        parts = [_simulate(spec, policy, opts, c) for c in chunks]
    costs = np.concatenate([p[0] for p in parts])
    return costs, sum(p[1] for p in parts)


def reference_cost(spec: ProblemSpec, opts: SimOptions) -> float:
    """Clairvoyant expected cost that regrets are measured against."""
    if opts.fixed_horizon is None:
        return oracle_cost_closed_form(spec)
    return oracle_cost_fixed_horizon(spec, opts.fixed_horizon)


def summarize(costs: np.ndarray, reference: float, seed: int,
              violations: int = 0) -> CostReport:
    n = costs.shape[0]
    mean = float(np.mean(costs))
    se = float(np.std(costs, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return CostReport(n, mean, se, (mean - 1.96 * se, mean + 1.96 * se),
                      mean - reference, seed, costs, violations)


def estimate_cost(spec: ProblemSpec, policy: Policy, opts: SimOptions) -> CostReport:
    costs, violations = simulate_costs(spec, policy, opts)
    return summarize(costs, reference_cost(spec, opts), opts.seed, violations)


def paired_difference(first: CostReport, second: CostReport) -> tuple[float, float]:
    """Mean and standard error of ``first - second`` over common episodes."""
    diff = first.costs - second.costs
    n = diff.shape[0]
    se = float(np.std(diff, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(diff.mean()), se


def tune_qcd(spec: ProblemSpec, direct: bool, h_grid, opts: SimOptions):
    """Best alarm level on ``h_grid`` by mean cost over common episodes.

    Ties go to the smaller ``h``.
    """
    h_values = sorted(float(h) for h in h_grid)
    if not h_values:
        raise ValueError("h_grid must be non-empty")
    best_h, best = None, None
    for h in h_values:
        report = estimate_cost(spec, Qcd(h, direct), opts)
        if best is None or report.mean_cost < best.mean_cost:
            best_h, best = h, report
    return best_h, best

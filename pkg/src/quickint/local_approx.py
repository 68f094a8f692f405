"""First-order ("local intervention") approximation of the belief MDP.

When every intervention law is within O(delta) of the pre-change law, the
expectation over the next observation can be replaced by the mean belief
path ``pi -> pi + lam (1 - pi)``. The resulting deterministic control problem
has threshold solutions, closed-form threshold bounds and a closed-form cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .belief import predict
from .grid_solver import (
    NEVER,
    GridConfig,
    ThresholdPolicy,
    _iterate,
    interpolate,
    transition_operator,
)
from .model import ProblemSpec

APPROX_CONFIG = GridConfig(num_cells=10_000, epsilon=1e-10)


@dataclass(frozen=True)
class CostDeltas:
    """Cost differences between intervention laws.

    ``A_p[a] = (beta_a - alpha) . c_p`` for ``a = 0..A``; ``D_p[a-1] = (beta_a -
    beta_{a-1}) . c_p`` and ``D_i[a-1] = c_i[a] - c_i[a-1]`` for ``a = 1..A``;
    ``B_p = alpha . c_p``.
    """

    A_p: np.ndarray
    D_p: np.ndarray
    D_i: np.ndarray
    B_p: float


def cost_deltas(spec: ProblemSpec) -> CostDeltas:
    A_p = (spec.betas - spec.alpha) @ spec.c_p
    D_p = (spec.betas[1:] - spec.betas[:-1]) @ spec.c_p
    D_i = np.diff(spec.c_i)
    return CostDeltas(A_p, D_p, D_i, spec.base_cost)


@dataclass(frozen=True)
class ApproxSolution:
    policy: ThresholdPolicy
    value_at_zero: float
    grid: np.ndarray
    J: np.ndarray
    V: np.ndarray
    sweeps_used: int
    final_residual: float

    @property
    def thresholds(self) -> tuple[float, ...]:
        return self.policy.thresholds

    def value(self, a_tilde: int, pi) -> np.ndarray:
        return interpolate(self.grid, _MODE, self.V[a_tilde], pi)

    def to_dict(self) -> dict:
        return {
            **self.policy.to_dict(),
            "value_at_zero": self.value_at_zero,
            "sweeps": self.sweeps_used,
            "residual": self.final_residual,
        }


_MODE = APPROX_CONFIG.interpolation


def solve_approx(spec: ProblemSpec, cfg: GridConfig = APPROX_CONFIG) -> ApproxSolution:
    """Value-iterate the approximate Bellman system on a fine grid.

    ``J~[a](pi) = c_i[a] + rho B_p + rho pi~ A_p[a] + rho V~[a](pi~)`` with
    ``pi~ = pi + lam (1 - pi)`` and ``V~[a] = min(J~[a], J~[a+1])``.
    """
    grid = cfg.grid()
    deltas = cost_deltas(spec)
    pt = predict(grid, spec.lam)
    op = transition_operator(grid, cfg.interpolation, np.ones((grid.shape[0], 1)),
                             pt[:, None])
    consts = np.stack([
        spec.c_i[a] + spec.rho * deltas.B_p + spec.rho * pt * deltas.A_p[a]
        for a in range(spec.num_actions + 1)
    ])
    rho = spec.rho

    def step(V):
        return consts + rho * (op @ V.T).T

    J, V, policy, sweeps, residual, _ = _iterate(step, consts.shape, cfg)
    thresholds = []
    violations = 0
    running = -math.inf
    for a in range(1, spec.num_actions + 1):
        up = np.flatnonzero(policy[a - 1] == a)
        t = float(grid[up[0]]) if up.size else NEVER
        if up.size:
            violations += int(np.count_nonzero(policy[a - 1, up[0]:] != a))
        if t < running:
            violations += 1
        running = max(running, t)
        thresholds.append(running)

    # value at pi = 0 by one exact backup; 0 is generally not a representative
    p0 = predict(0.0, spec.lam)
    J0 = (spec.c_i + rho * deltas.B_p + rho * p0 * deltas.A_p
          + rho * interpolate(grid, cfg.interpolation, V, p0))
    value0 = float(min(J0[0], J0[min(1, spec.num_actions)]))
    return ApproxSolution(ThresholdPolicy(tuple(thresholds), violations), value0, grid,
                          J, V, sweeps, residual)


def approx_difference(spec: ProblemSpec, deltas: CostDeltas, sol: ApproxSolution,
                      a: int, pi):
    """Approximate advantage of moving from level ``a`` to ``a+1`` at belief ``pi``.

    ``D_i[a+1] + pi~ rho D_p[a+1] + rho (V~[a+1](pi~) - V~[a](pi~))``; negative
    means escalating is better.
    """
    if not 0 <= a < spec.num_actions:
        raise ValueError(f"level {a} has no stricter neighbour")
    pt = predict(np.asarray(pi, dtype=np.float64), spec.lam)
    out = (deltas.D_i[a] + pt * spec.rho * deltas.D_p[a]
           + spec.rho * (sol.value(a + 1, pt) - sol.value(a, pt)))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ThresholdBounds:
    """Closed-form bracket ``lower[a-1] <= pi~*_a <= upper[a-1]``.

    ``lower``/``upper`` are clamped to [0, 1]; the ``raw_`` fields keep the
    unclamped values. ``inverted`` lists levels whose raw lower bound exceeds
    the raw upper bound.
    """

    lower: np.ndarray
    upper: np.ndarray
    raw_lower: np.ndarray
    raw_upper: np.ndarray

    @property
    def inverted(self) -> list[int]:
        return [a + 1 for a in np.flatnonzero(self.raw_lower > self.raw_upper)]

    def to_dict(self) -> dict:
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "raw_lower": self.raw_lower.tolist(),
            "raw_upper": self.raw_upper.tolist(),
            "inverted": self.inverted,
        }


def _check_dp(deltas: CostDeltas) -> None:
    bad = np.flatnonzero(deltas.D_p >= 0.0)
    if bad.size:
        a = int(bad[0]) + 1
        raise ValueError(
            f"D_p for action {a} is {deltas.D_p[a - 1]:.3g} >= 0; escalating to level "
            f"{a} does not lower the propagation cost, so the bounds are undefined"
        )


def raw_upper_thresholds(spec: ProblemSpec, deltas: CostDeltas) -> np.ndarray:
    """``-D_i / ((1 - lam) rho D_p) - lam / (1 - lam)``, with the lam -> 1 limit."""
    _check_dp(deltas)
    ratio = deltas.D_i / (-spec.rho * deltas.D_p)  # the bound on pi~ itself
    lam = spec.lam
    if lam >= 1.0:
        # pi~ = 1 for every pi: switch at once unless escalation never pays
        return np.where(ratio >= 1.0, np.inf, -np.inf)
    return (ratio - lam) / (1.0 - lam)


def threshold_bounds(spec: ProblemSpec, deltas: CostDeltas | None = None) -> ThresholdBounds:
    deltas = deltas or cost_deltas(spec)
    upper = raw_upper_thresholds(spec, deltas)
    rho, lam, A = spec.rho, spec.lam, spec.num_actions
    lower = np.empty(A)
    for a in range(1, A + 1):
        tail = sum(rho ** (j - a) * (deltas.D_i[j - 1] + rho * deltas.D_p[j - 1])
                   for j in range(a + 1, A + 1))
        denom = -(1.0 - lam) * rho * deltas.D_p[a - 1]
        if tail == 0.0:
            lower[a - 1] = upper[a - 1]
        elif denom == 0.0:
            lower[a - 1] = math.copysign(math.inf, tail)
        else:
            lower[a - 1] = upper[a - 1] + tail / denom
    return ThresholdBounds(np.clip(lower, 0.0, 1.0), np.clip(upper, 0.0, 1.0),
                           lower, upper)


def switch_time(threshold: float, lam: float) -> int:
    """First step ``t`` where the uncontrolled belief ``1 - (1 - lam)^t`` reaches ``threshold``."""
    if threshold >= 1.0:
        raise ValueError(f"threshold {threshold} >= 1 is never reached")
    if threshold <= 0.0:
        return 0
    if lam >= 1.0:
        return 1

    def path(k: int) -> float:
        return 1.0 - (1.0 - lam) ** k

    # the log ratio can land a rounding error away from an exact step; settle on the path itself
    t = max(1, math.ceil(math.log1p(-threshold) / math.log1p(-lam)))
    while t > 1 and path(t - 1) >= threshold:
        t -= 1
    while path(t) < threshold:
        t += 1
    return t


def approx_total_cost(spec: ProblemSpec, policy: ThresholdPolicy,
                      deltas: CostDeltas | None = None) -> float:
    """Closed-form cost from belief 0 of a threshold policy on the mean belief path."""
    deltas = deltas or cost_deltas(spec)
    rho, lam = spec.rho, spec.lam
    r = rho * (1.0 - lam)
    total = rho * deltas.B_p / (1.0 - rho)
    total += lam * rho * deltas.A_p[0] / ((1.0 - rho) * (1.0 - r))
    for a, th in enumerate(policy.thresholds, start=1):
        t = switch_time(th, lam)
        total += rho ** t * deltas.D_i[a - 1] / (1.0 - rho)
        total += (rho ** (t + 1) / (1.0 - rho) - r ** (t + 1) / (1.0 - r)) * deltas.D_p[a - 1]
    return float(total)


def approx_cost_trajectory_oracle(spec: ProblemSpec, policy: ThresholdPolicy,
                                  tol: float = 1e-14) -> float:
    """Same cost as :func:`approx_total_cost`, by summing along the belief path.

    At step ``k = 1, 2, ...`` the level ``a`` chosen at belief ``pi_{k-1}`` costs
    ``rho^(k-1) c_i[a] + rho^k (B_p + pi_k A_p[a])``.
    """
    if any(t >= 1.0 for t in policy.thresholds):
        raise ValueError("every threshold must lie in [0, 1)")
    A_p = (spec.betas - spec.alpha) @ spec.c_p
    B_p = float(spec.alpha @ spec.c_p)
    scale = float(np.max(spec.c_i) + B_p + np.max(np.abs(A_p))) or 1.0
    th = list(policy.thresholds)
    total = 0.0
    pi_prev = 0.0
    disc = 1.0  # rho^(k-1)
    k = 0
    while True:
        k += 1
        a = sum(1 for t in th if pi_prev >= t)
        pi_k = 1.0 - (1.0 - spec.lam) ** k
        total += disc * spec.c_i[a] + disc * spec.rho * (B_p + pi_k * A_p[a])
        disc *= spec.rho
        pi_prev = pi_k
        if disc * scale < tol * (1.0 - spec.rho):
            break
    return total

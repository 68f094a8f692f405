"""Intervention policies and the clairvoyant lower bound.

Every policy exposes ``actions(...)``, which acts on whole batches of
episodes at once; :func:`decide` is the scalar convenience wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_solver import (
    FiniteHorizonSolution,
    GridSolution,
    ThresholdPolicy,
    cell_index,
)
from .local_approx import cost_deltas, raw_upper_thresholds
from .model import ProblemSpec

POLICY_NAMES = ("low", "grid", "qcd", "dqcd", "oracle")


def low_complexity_policy(spec: ProblemSpec) -> ThresholdPolicy:
    """Thresholds from the closed-form upper bounds, made nondecreasing.

    Working down from the strictest level, each threshold is capped by the
    next one (the one above level ``A`` is 1), then clamped into [0, 1].
    """
    raw = raw_upper_thresholds(spec, cost_deltas(spec))
    out = np.empty_like(raw)
    cap = 1.0
    for a in range(raw.shape[0] - 1, -1, -1):
        cap = min(raw[a], cap)
        out[a] = cap
    return ThresholdPolicy(tuple(np.clip(out, 0.0, 1.0)))


@dataclass(frozen=True)
class PolicyState:
    pi: float
    level: int
    qcd_declared: bool = False
    t: int = 0
    # hidden change point and horizon, only for the oracle
    tau: int | None = None
    horizon: int | None = None


class Policy:
    name = "policy"
    needs_hidden = False

    def actions(self, pi, level, declared, t, constrained, num_levels, tau=None,
                horizon=None) -> np.ndarray:
        raise NotImplementedError

    def declares(self, pi) -> np.ndarray:
        """Whether a detection statistic crosses its alarm level (baselines only)."""
        return np.zeros(np.shape(pi), dtype=bool)


@dataclass(frozen=True)
class LowComplexity(Policy):
    thresholds: ThresholdPolicy
    name = "low"

    def actions(self, pi, level, declared, t, constrained, num_levels, tau=None,
                horizon=None):
        target = self.thresholds.target(pi)
        if not constrained:
            return target
        return np.maximum(np.minimum(target, level + 1), level)


@dataclass(frozen=True)
class GridOptimal(Policy):
    solution: GridSolution
    name = "grid"

    def actions(self, pi, level, declared, t, constrained, num_levels, tau=None,
                horizon=None):
        return self.solution.policy[level, cell_index(self.solution.num_cells, pi)]


@dataclass(frozen=True)
class FiniteHorizonOptimal(Policy):
    solution: FiniteHorizonSolution
    name = "fh"

    def actions(self, pi, level, declared, t, constrained, num_levels, tau=None,
                horizon=None):
        return self.solution.action(t, level, pi)


@dataclass(frozen=True)
class Qcd(Policy):
    """Detect with the posterior crossing ``h`` (Shiryaev's rule), then intervene.

    After the alarm the level ramps up one step per slot, or with
    ``direct=True`` jumps straight to the strictest level.
    """

    h: float
    direct: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.h < 1.0:
            raise ValueError(f"declare threshold {self.h} must lie in (0, 1)")

    @property
    def name(self) -> str:
        return "dqcd" if self.direct else "qcd"

    def declares(self, pi):
        return np.asarray(pi) >= self.h

    def actions(self, pi, level, declared, t, constrained, num_levels, tau=None,
                horizon=None):
        top = num_levels - 1
        alarm = np.asarray(declared) | self.declares(pi)
        after = np.full(np.shape(level), top) if self.direct else np.minimum(level + 1, top)
        return np.where(alarm, after, level)


@dataclass(frozen=True)
class Oracle(Policy):
    """Knows the change point and the horizon; ignores the one-step ramp limit."""

    name = "oracle"
    needs_hidden = True

    def actions(self, pi, level, declared, t, constrained, num_levels, tau=None,
                horizon=None):
        if tau is None or horizon is None:
            raise ValueError("the oracle needs the hidden change point and horizon")
        on = (t >= np.asarray(tau) - 1) & (t <= np.asarray(horizon) - 2)
        return np.where(on, num_levels - 1, 0)


def decide(kind: Policy, state: PolicyState, num_levels: int,
           constrained: bool = True) -> int:
    """Action for a single state; ``num_levels`` is ``A + 1``."""
    out = kind.actions(
        np.float64(state.pi), np.int64(state.level), np.bool_(state.qcd_declared),
        state.t, constrained, num_levels, tau=state.tau, horizon=state.horizon,
    )
    return int(out)


def oracle_cost_closed_form(spec: ProblemSpec) -> float:
    """Expected cost of the clairvoyant policy under a geometric horizon."""
    rho, lam = spec.rho, spec.lam
    r = rho * (1.0 - lam)
    return float(rho * spec.base_cost / (1.0 - rho)
                 + spec.c_i[-1] * (rho / (1.0 - rho) - r / (1.0 - r)))


def oracle_cost_fixed_horizon(spec: ProblemSpec, horizon: int) -> float:
    """Expected clairvoyant cost when the horizon is the constant ``horizon``.

    Propagation is always under ``alpha``; the strictest level is paid at
    every ``t`` in ``[tau - 1, horizon - 2]``, i.e. with probability
    ``1 - (1 - lam)^(t+1)`` for ``t = 0..horizon-2``.
    """
    t = np.arange(horizon - 1)
    p_on = 1.0 - (1.0 - spec.lam) ** (t + 1)
    return float((horizon - 1) * spec.base_cost + spec.c_i[-1] * p_on.sum())

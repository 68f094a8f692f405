"""Grid value iteration for the belief MDP, plus a finite-horizon variant.

The belief interval [0, 1] is cut into ``N`` equal cells; each cell has one
representative belief. Values at off-grid beliefs (the Bayes successors of a
representative) are read by linear interpolation between neighbouring
representatives (extrapolated linearly past the outermost ones) or by the
containing cell's value. Because the successor beliefs of each representative
never change, one Bellman sweep is a sparse matrix-vector product per action.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .belief import observation_likelihood, update_all
from .model import ProblemSpec

NEVER = math.inf


class Representative(enum.Enum):
    MIDPOINT = "midpoint"
    LEFT_EDGE = "left"


class Interpolation(enum.Enum):
    LINEAR = "linear"
    NEAREST = "nearest"


@dataclass(frozen=True)
class GridConfig:
    num_cells: int = 1000
    representative: Representative = Representative.MIDPOINT
    epsilon: float = 1e-8
    interpolation: Interpolation = Interpolation.LINEAR
    max_sweeps: int = 100_000

    def __post_init__(self) -> None:
        if self.num_cells < 2:
            raise ValueError("num_cells must be at least 2")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be positive")

    def grid(self) -> np.ndarray:
        n = self.num_cells
        offset = 0.5 if self.representative is Representative.MIDPOINT else 0.0
        return (np.arange(n) + offset) / n


class ConvergenceError(RuntimeError):
    def __init__(self, final_residual: float, sweeps: int):
        super().__init__(
            f"value iteration did not reach tolerance in {sweeps} sweeps "
            f"(final residual {final_residual:.3e})"
        )
        self.final_residual = final_residual
        self.sweeps = sweeps


def cell_index(num_cells: int, pi) -> np.ndarray:
    """Index of the uniform cell containing each belief (1.0 goes to the last cell)."""
    idx = np.floor(np.asarray(pi, dtype=np.float64) * num_cells).astype(np.int64)
    return np.clip(idx, 0, num_cells - 1)


def interp_weights(grid: np.ndarray, mode: Interpolation, pi):
    """Columns and weights that read a tabulated function at beliefs ``pi``.

    Returns ``(lo, w_lo, hi, w_hi)`` so that ``f(pi) ~ w_lo*f[lo] + w_hi*f[hi]``.
    """
    pi = np.asarray(pi, dtype=np.float64)
    n = grid.shape[0]
    if mode is Interpolation.NEAREST:
        idx = cell_index(n, pi)
        return idx, np.ones_like(pi), idx, np.zeros_like(pi)
    step = grid[1] - grid[0]
    pos = (pi - grid[0]) / step
    lo = np.clip(np.floor(pos).astype(np.int64), 0, n - 2)
    w = pos - lo
    return lo, 1.0 - w, lo + 1, w


def interpolate(grid: np.ndarray, mode: Interpolation, table: np.ndarray, pi) -> np.ndarray:
    lo, wl, hi, wh = interp_weights(grid, mode, pi)
    return wl * table[..., lo] + wh * table[..., hi]


def transition_operator(grid: np.ndarray, mode: Interpolation, probs: np.ndarray,
                        succ: np.ndarray) -> sp.csr_matrix:
    """Sparse ``P`` with ``(P @ f)[j] = sum_k probs[j, k] * f(succ[j, k])``."""
    n, k = succ.shape
    lo, wl, hi, wh = interp_weights(grid, mode, succ)
    rows = np.repeat(np.arange(n), 2 * k)
    cols = np.stack([lo, hi], axis=-1).reshape(-1)
    vals = (probs[..., None] * np.stack([wl, wh], axis=-1)).reshape(-1)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def constrained_min(J: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``V[a] = min(J[a], J[min(a+1, A)])`` with ties going to the lower action."""
    num = J.shape[0]
    up = np.minimum(np.arange(num) + 1, num - 1)
    J_up = J[up]
    step = J_up < J
    V = np.where(step, J_up, J)
    policy = np.where(step, up[:, None], np.arange(num)[:, None])
    return V, policy


@dataclass(frozen=True)
class ThresholdPolicy:
    """Nondecreasing escalation thresholds for levels ``1..A``; ``inf`` means never.

    ``violations`` counts departures from a clean threshold structure seen
    while the thresholds were extracted (zero when built analytically).
    """

    thresholds: tuple[float, ...]
    violations: int = 0

    def __post_init__(self) -> None:
        th = tuple(float(t) for t in self.thresholds)
        if any(b < a for a, b in zip(th, th[1:])):
            raise ValueError(f"thresholds must be nondecreasing: {th}")
        object.__setattr__(self, "thresholds", th)

    def target(self, pi) -> np.ndarray:
        """Highest level whose threshold the belief has reached (0 if none)."""
        th = np.asarray(self.thresholds, dtype=np.float64)
        pi = np.asarray(pi, dtype=np.float64)
        return (pi[..., None] >= th).sum(axis=-1)

    def to_dict(self) -> dict:
        return {
            "thresholds": [None if math.isinf(t) else t for t in self.thresholds],
            "violations": self.violations,
        }


@dataclass(frozen=True)
class GridSolution:
    grid: np.ndarray
    J: np.ndarray  # [a, j]
    V: np.ndarray  # [a_tilde, j]
    policy: np.ndarray  # [a_tilde, j]
    sweeps_used: int
    final_residual: float
    interpolation: Interpolation = Interpolation.LINEAR
    residual_history: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def num_cells(self) -> int:
        return self.grid.shape[0]

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "J": self.J.tolist(),
            "V": self.V.tolist(),
            "policy": self.policy.tolist(),
            "residual": self.final_residual,
            "sweeps": self.sweeps_used,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict,
                  interpolation: Interpolation = Interpolation.LINEAR) -> "GridSolution":
        return cls(
            grid=np.asarray(doc["grid"], dtype=np.float64),
            J=np.asarray(doc["J"], dtype=np.float64),
            V=np.asarray(doc["V"], dtype=np.float64),
            policy=np.asarray(doc["policy"], dtype=np.int64),
            sweeps_used=int(doc["sweeps"]),
            final_residual=float(doc["residual"]),
            interpolation=interpolation,
        )


def _operators(spec: ProblemSpec, grid: np.ndarray, mode: Interpolation):
    ops, consts = [], []
    for a in range(spec.num_actions + 1):
        sigma = observation_likelihood(spec, grid, a)
        succ = update_all(spec, grid, a)
        ops.append(transition_operator(grid, mode, sigma, succ))
        consts.append(spec.c_i[a] + spec.rho * (sigma @ spec.c_p))
    return ops, np.array(consts)


def _iterate(step, shape, cfg: GridConfig):
    """Jacobi value iteration from zero: ``J <- step(V)``, ``V <- constrained min``."""
    V = np.zeros(shape)
    history = []
    for sweep in range(1, cfg.max_sweeps + 1):
        J = step(V)
        V_new, policy = constrained_min(J)
        residual = float(np.max(np.abs(V_new - V)))
        history.append(residual)
        V = V_new
        if residual <= cfg.epsilon:
            return J, V, policy, sweep, residual, np.array(history)
    raise ConvergenceError(history[-1], cfg.max_sweeps)


def solve_grid(spec: ProblemSpec, cfg: GridConfig = GridConfig()) -> GridSolution:
    """Fixed point of the belief-MDP Bellman equations on the representatives.

    ``J[a](pi) = c_i[a] + rho * sum_z sigma_a(pi, z) (c_p[z] + V[a](T_a(pi, z)))``
    and ``V[a](pi) = min(J[a](pi), J[a+1](pi))``.
    """
    grid = cfg.grid()
    ops, consts = _operators(spec, grid, cfg.interpolation)
    rho = spec.rho

    def step(V):
        return np.stack([consts[a] + rho * (ops[a] @ V[a]) for a in range(len(ops))])

    J, V, policy, sweeps, residual, history = _iterate(
        step, (spec.num_actions + 1, grid.shape[0]), cfg)
    return GridSolution(grid, J, V, policy, sweeps, residual, cfg.interpolation, history)


def closed_form_VA(spec: ProblemSpec) -> float:
    """Value once the strictest level is in force; it does not depend on the belief."""
    return (spec.c_i[-1] + spec.rho * spec.base_cost) / (1.0 - spec.rho)


def eval_value(sol: GridSolution, pi, a_tilde: int):
    """Tabulated value of level ``a_tilde`` at belief ``pi`` (solution's interpolation)."""
    out = interpolate(sol.grid, sol.interpolation, sol.V[a_tilde], pi)
    return float(out) if np.ndim(out) == 0 else out


def action_values_at(spec: ProblemSpec, sol: GridSolution, pi: float) -> np.ndarray:
    """One exact Bellman backup of every ``J[a]`` at an arbitrary belief."""
    out = np.empty(spec.num_actions + 1)
    for a in range(spec.num_actions + 1):
        sigma = observation_likelihood(spec, pi, a)
        succ = update_all(spec, pi, a)
        future = interpolate(sol.grid, sol.interpolation, sol.V[a], succ)
        out[a] = spec.c_i[a] + spec.rho * float(sigma @ (spec.c_p + future))
    return out


def value_at(spec: ProblemSpec, sol: GridSolution, pi: float, a_tilde: int = 0) -> float:
    """``V[a_tilde](pi)`` by a Bellman backup from the converged table.

    Used for the optimal cost ``V_0(0)``, where 0 is not a representative.
    """
    J = action_values_at(spec, sol, pi)
    return float(min(J[a_tilde], J[min(a_tilde + 1, spec.num_actions)]))


def extract_thresholds(sol: GridSolution) -> ThresholdPolicy:
    """Escalation thresholds read off the grid policy.

    Threshold ``a`` is the smallest representative where the policy at level
    ``a-1`` moves up to ``a``. Violations count every place the table departs
    from a threshold rule: a row that steps back down after stepping up, and
    each threshold smaller than its predecessor (repaired by a running max).
    """
    num_levels = sol.policy.shape[0] - 1
    raw = []
    violations = 0
    for a in range(1, num_levels + 1):
        row = sol.policy[a - 1]
        up = np.flatnonzero(row == a)
        raw.append(float(sol.grid[up[0]]) if up.size else NEVER)
        if up.size:
            violations += int(np.count_nonzero(row[up[0]:] != a))
    thresholds = []
    running = -math.inf
    for t in raw:
        if t < running:
            violations += 1
        running = max(running, t)
        thresholds.append(running)
    return ThresholdPolicy(tuple(thresholds), violations)


@dataclass(frozen=True)
class FiniteHorizonSolution:
    """Backward-induction tables for a horizon of ``T`` decision epochs ``t = 0..T-1``."""

    grid: np.ndarray
    W: np.ndarray  # [t, a_tilde, j]
    actions: np.ndarray  # [t, a_tilde, j]
    constrained: bool
    interpolation: Interpolation = Interpolation.LINEAR

    @property
    def horizon(self) -> int:
        return self.W.shape[0]

    def action(self, t, a_tilde, pi) -> np.ndarray:
        """Nearest-cell policy lookup, broadcasting over episodes."""
        t = np.minimum(t, self.horizon - 1)
        return self.actions[t, a_tilde, cell_index(self.grid.shape[0], pi)]


def _allowed(num_levels: int, constrained: bool) -> np.ndarray:
    """mask[a_tilde, a] of actions open at each current level."""
    a_tilde = np.arange(num_levels)[:, None]
    a = np.arange(num_levels)[None, :]
    if not constrained:
        return np.ones((num_levels, num_levels), dtype=bool)
    return (a == a_tilde) | (a == np.minimum(a_tilde + 1, num_levels - 1))


def finite_horizon_q(spec: ProblemSpec, grid, ops, consts, W_next, last: bool):
    """Q[a, j]: pay ``c_i[a]`` now, then (unless last) one observation and the future."""
    if last:
        return np.repeat(spec.c_i[:, None], grid.shape[0], axis=1)
    return np.stack([consts[a] + ops[a] @ W_next[a] for a in range(len(ops))])


def solve_finite_horizon(spec: ProblemSpec, horizon: int, cfg: GridConfig = GridConfig(),
                         constrained: bool = True) -> FiniteHorizonSolution:
    """Backward induction over ``t = horizon-1, ..., 0`` without discounting.

    Total cost is ``c_i[a_0] + sum_{t=1}^{horizon-1} (c_p[z_t] + c_i[a_t])``;
    the process survives deterministically until the horizon.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    grid = cfg.grid()
    num = spec.num_actions + 1
    ops, consts = [], []
    for a in range(num):
        sigma = observation_likelihood(spec, grid, a)
        succ = update_all(spec, grid, a)
        ops.append(transition_operator(grid, cfg.interpolation, sigma, succ))
        consts.append(spec.c_i[a] + sigma @ spec.c_p)
    consts = np.array(consts)
    mask = _allowed(num, constrained)
    W = np.empty((horizon, num, grid.shape[0]))
    acts = np.empty((horizon, num, grid.shape[0]), dtype=np.int64)
    W_next = None
    for t in range(horizon - 1, -1, -1):
        Q = finite_horizon_q(spec, grid, ops, consts, W_next, last=(t == horizon - 1))
        # candidates[a_tilde, a, j]; argmin picks the lowest action on ties
        cand = np.where(mask[:, :, None], Q[None, :, :], np.inf)
        acts[t] = np.argmin(cand, axis=1)
        W[t] = np.take_along_axis(cand, acts[t][:, None, :], axis=1)[:, 0, :]
        W_next = W[t]
    return FiniteHorizonSolution(grid, W, acts, constrained, cfg.interpolation)


def finite_horizon_value_at(spec: ProblemSpec, sol: FiniteHorizonSolution, pi: float,
                            a_tilde: int = 0) -> float:
    """Optimal expected cost from belief ``pi`` at ``t = 0`` by one exact backup."""
    num = spec.num_actions + 1
    if sol.horizon == 1:
        Q = spec.c_i.copy()
    else:
        Q = np.empty(num)
        for a in range(num):
            sigma = observation_likelihood(spec, pi, a)
            succ = update_all(spec, pi, a)
            future = interpolate(sol.grid, sol.interpolation, sol.W[1, a], succ)
            Q[a] = spec.c_i[a] + float(sigma @ (spec.c_p + future))
    allowed = _allowed(num, sol.constrained)[a_tilde]
    return float(np.min(np.where(allowed, Q, np.inf)))

"""Problem specification, assumption checks and the standard parametric family."""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

PROB_TOL = 1e-12


def _frozen(values: Any, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _renormalize(arr: np.ndarray) -> np.ndarray:
    """Renormalize rows whose sum is within PROB_TOL of one; leave the rest alone."""
    sums = arr.sum(axis=-1, keepdims=True)
    close = np.abs(sums - 1.0) <= PROB_TOL
    out = np.where(close, arr / sums, arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ProblemSpec:
    """All parameters of a quickest-intervention problem.

    Observations are indexed ``0..Z-1`` internally (``z = 1..Z`` in the usual
    notation); actions are ``0..A`` with 0 meaning idle. ``betas[a]`` is the
    post-change observation law under action ``a``.

    Dimension errors raise ``ValueError`` immediately; every modelling
    assumption is checked by :func:`validate_spec` instead.
    """

    alpha: np.ndarray
    betas: np.ndarray
    c_p: np.ndarray
    c_i: np.ndarray
    rho: float
    lam: float

    def __post_init__(self) -> None:
        alpha = _frozen(self.alpha, 1)
        betas = _frozen(self.betas, 2)
        c_p = _frozen(self.c_p, 1)
        c_i = _frozen(self.c_i, 1)
        z = alpha.shape[0]
        if z < 1:
            raise ValueError("alpha must be non-empty")
        if betas.shape[1] != z:
            raise ValueError(f"betas rows have length {betas.shape[1]}, expected Z={z}")
        if betas.shape[0] < 1:
            raise ValueError("betas needs at least one row (action 0)")
        if c_p.shape[0] != z:
            raise ValueError(f"c_p has length {c_p.shape[0]}, expected Z={z}")
        if c_i.shape[0] != betas.shape[0]:
            raise ValueError(
                f"c_i has length {c_i.shape[0]}, expected A+1={betas.shape[0]}"
            )
        object.__setattr__(self, "alpha", _renormalize(alpha))
        object.__setattr__(self, "betas", _renormalize(betas))
        object.__setattr__(self, "c_p", c_p)
        object.__setattr__(self, "c_i", c_i)
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def num_obs(self) -> int:
        return self.alpha.shape[0]

    @property
    def num_actions(self) -> int:
        """A, the highest intervention level."""
        return self.betas.shape[0] - 1

    @property
    def base_cost(self) -> float:
        """Expected propagation cost of one pre-change slot, sum_z alpha(z) c_p(z)."""
        return float(self.alpha @ self.c_p)

    def replace(self, **changes: Any) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)

    # JSON document: keys Z, A, alpha, betas, c_p, c_i, rho, lambda
    def to_dict(self) -> dict:
        return {
            "Z": self.num_obs,
            "A": self.num_actions,
            "alpha": self.alpha.tolist(),
            "betas": self.betas.tolist(),
            "c_p": self.c_p.tolist(),
            "c_i": self.c_i.tolist(),
            "rho": self.rho,
            "lambda": self.lam,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ProblemSpec":
        expected = {"Z", "A", "alpha", "betas", "c_p", "c_i", "rho", "lambda"}
        keys = set(doc)
        if keys != expected:
            missing = sorted(expected - keys)
            extra = sorted(keys - expected)
            raise ValueError(f"bad problem spec keys: missing={missing} extra={extra}")
        spec = cls(
            alpha=doc["alpha"],
            betas=doc["betas"],
            c_p=doc["c_p"],
            c_i=doc["c_i"],
            rho=doc["rho"],
            lam=doc["lambda"],
        )
        if spec.num_obs != int(doc["Z"]) or spec.num_actions != int(doc["A"]):
            raise ValueError(
                f"declared Z={doc['Z']}, A={doc['A']} do not match array shapes "
                f"(Z={spec.num_obs}, A={spec.num_actions})"
            )
        return spec

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> "ProblemSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


class Strictness(enum.Enum):
    STRICT = "strict"
    WARN = "warn"


# rules that Warn mode downgrades to warnings
SOFT_RULES = frozenset({"mlr", "stochastic-dominance", "stricter-better"})


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    indices: tuple
    margin: float
    warning: bool = False


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def passed(self) -> bool:
        return all(v.warning for v in self.violations)

    @property
    def errors(self) -> list[Violation]:
        return [v for v in self.violations if not v.warning]

    @property
    def warnings(self) -> list[Violation]:
        return [v for v in self.violations if v.warning]

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def format(self) -> str:
        if not self.violations:
            return "ok: all checks passed"
        lines = []
        for v in self.violations:
            tag = "warning" if v.warning else "error"
            lines.append(
                f"{tag} [{v.rule}] {v.message} (at {v.indices}, margin {v.margin:.3g})"
            )
        return "\n".join(lines)


def _worst(margins: np.ndarray) -> tuple[tuple, float]:
    idx = np.unravel_index(int(np.argmin(margins)), margins.shape)
    return tuple(int(i) for i in idx), float(margins[idx])


def validate_spec(
    spec: ProblemSpec, strictness: Strictness = Strictness.STRICT
) -> ValidationReport:
    """Check every modelling assumption; returns a report, never raises.

    A rule's margin is the signed slack of its inequality at the worst
    offending index (negative means violated).
    """
    found: list[tuple[str, str, tuple, float]] = []

    def check(rule: str, margins, message: str, tol: float = 0.0,
              strict: bool = False) -> None:
        # margin >= -tol passes; with strict=True the margin must be > 0
        margins = np.asarray(margins, dtype=np.float64)
        if margins.size == 0:
            return
        idx, worst = _worst(margins)
        if worst < -tol or (strict and worst <= 0.0):
            found.append((rule, message, idx, worst))

    alpha, betas, c_p, c_i = spec.alpha, spec.betas, spec.c_p, spec.c_i
    dists = np.vstack([alpha, betas])  # row 0 is alpha, row a+1 is beta_a

    check("prob-sum", PROB_TOL - np.abs(dists.sum(axis=1) - 1.0),
          "probability vector (row 0 = alpha, row a+1 = beta_a) does not sum to 1")
    check("positive", dists, "probability entries must be strictly positive",
          strict=True)
    check("rho-range", [spec.rho, 1.0 - spec.rho], "rho must lie in (0, 1)",
          strict=True)
    check("lambda-range", [spec.lam], "lambda must lie in (0, 1]", strict=True)
    check("lambda-range", [1.0 - spec.lam], "lambda must lie in (0, 1]")
    check("costs-nonnegative", np.concatenate([c_p, c_i]), "costs must be nonnegative")
    check("c_p-monotone", np.diff(c_p), "c_p must be nondecreasing in z")
    check("c_i-monotone", np.diff(c_i), "c_i must be nondecreasing in a")
    check("c_i0-zero", [-abs(c_i[0])], "c_i[0]=0: idling must be free")
    check("beta_A-alpha", PROB_TOL - np.abs(betas[-1] - alpha),
          "beta_A=alpha: the strictest action must restore the pre-change law")

    if spec.num_actions >= 1 and np.all(dists > 0.0):
        # beta_{a-1} MLR-dominates beta_a: beta_{a-1}(z)/beta_a(z) nondecreasing in z
        ratios = betas[:-1] / betas[1:]
        check("mlr", np.diff(ratios, axis=1),
              "MLR ordering: beta_{a-1}(z)/beta_a(z) must be nondecreasing in z",
              tol=PROB_TOL)
        tails = np.cumsum(betas[:, ::-1], axis=1)[:, ::-1]
        check("stochastic-dominance", tails[:-1] - tails[1:],
              "stochastic dominance: tail sums of beta_{a-1} must dominate beta_a",
              tol=PROB_TOL)
        total = betas @ c_p + c_i
        check("stricter-better", total[:-1] - total[1:],
              "stricter is better: beta_a.c_p + c_i[a] must be < beta_{a-1}.c_p + c_i[a-1]",
              strict=True)

    downgrade = strictness is Strictness.WARN
    violations = tuple(
        Violation(rule, msg, idx, margin, warning=downgrade and rule in SOFT_RULES)
        for rule, msg, idx, margin in found
    )
    return ValidationReport(violations)


def make_paper_family(delta: float, rho: float = 0.99, lam: float = 0.03) -> ProblemSpec:
    """Five symptoms, three intervention levels, separation ``delta``.

    ``betas[i] = [0.2-(6-2i)d, 0.2-(3-i)d, 0.2, 0.2+(3-i)d, 0.2+(6-2i)d]``;
    ``betas[3]`` equals the uniform pre-change law.
    """
    if not 0.0 < delta < 0.2 / 6:
        raise ValueError(f"delta={delta} outside (0, 0.2/6); entries would not stay positive")
    i = np.arange(4.0)[:, None]
    shift = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])[None, :] * (3.0 - i) * delta
    betas = 0.2 + shift
    return ProblemSpec(
        alpha=np.full(5, 0.2),
        betas=betas,
        c_p=np.arange(5.0),
        c_i=[0.0, 0.02, 0.06, 0.2],
        rho=rho,
        lam=lam,
    )


@dataclass(frozen=True)
class LocalRegimeReport:
    delta_eff: float
    gamma_eff: float
    tail_gaps: np.ndarray = field(repr=False)  # [a-1, j-2] for a>=1, j>=2


def local_regime_report(spec: ProblemSpec) -> LocalRegimeReport:
    """How far each consecutive pair of intervention laws is apart in tail sums.

    Purely diagnostic: ``delta_eff`` is the largest tail-sum gap and
    ``gamma_eff`` the ratio of the smallest to the largest (0 if all vanish).
    """
    betas = spec.betas
    if spec.num_actions < 1 or spec.num_obs < 2:
        return LocalRegimeReport(0.0, 0.0, np.zeros((max(spec.num_actions, 0), 0)))
    tails = np.cumsum(betas[:, ::-1], axis=1)[:, ::-1][:, 1:]
    gaps = np.abs(tails[:-1] - tails[1:])
    delta_eff = float(gaps.max())
    gamma_eff = float(gaps.min() / delta_eff) if delta_eff > 0.0 else 0.0
    return LocalRegimeReport(delta_eff, gamma_eff, gaps)


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats; zero-probability terms of ``p`` contribute nothing."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    if np.any(q <= 0.0):
        raise ValueError("q must be strictly positive")
    mask = p > 0.0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))

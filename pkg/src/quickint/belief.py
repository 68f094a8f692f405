"""Posterior dynamics of the change indicator.

All functions broadcast over numpy arrays of beliefs so the simulator and
the solvers can push whole grids or batches of episodes through them.
Observations ``z`` are 0-based indices into the spec's vectors.
"""

from __future__ import annotations

import numpy as np

from .model import ProblemSpec


def predict(pi, lam: float):
    """Belief one step later, before the next observation: pi + lam * (1 - pi)."""
    return pi + lam * (1.0 - pi)


def observation_likelihood(spec: ProblemSpec, pi, a: int) -> np.ndarray:
    """Predictive law of the next observation given belief ``pi`` and action ``a``.

    Returns an array of shape ``np.shape(pi) + (Z,)``.
    """
    pt = np.asarray(predict(pi, spec.lam), dtype=np.float64)[..., None]
    return spec.alpha * (1.0 - pt) + spec.betas[a] * pt


def update(spec: ProblemSpec, pi, a, z):
    """Bayes update of the belief after action ``a`` and observation ``z``."""
    pt = predict(np.asarray(pi, dtype=np.float64), spec.lam)
    num = pt * spec.betas[a, z]
    return num / (num + (1.0 - pt) * spec.alpha[z])


def update_all(spec: ProblemSpec, pi, a: int) -> np.ndarray:
    """Posterior for every possible next observation; shape ``np.shape(pi) + (Z,)``."""
    pt = np.asarray(predict(pi, spec.lam), dtype=np.float64)[..., None]
    num = pt * spec.betas[a]
    return num / (num + (1.0 - pt) * spec.alpha)


def first_order_update(spec: ProblemSpec, pi, a, z):
    """Linearization of :func:`update` around ``beta_a = alpha``, clipped to [0, 1]."""
    pt = predict(np.asarray(pi, dtype=np.float64), spec.lam)
    alpha_z = spec.alpha[z]
    out = pt + (1.0 - pt) * pt * (spec.betas[a, z] - alpha_z) / alpha_z
    return np.clip(out, 0.0, 1.0)

"""Per-episode random streams.

Every episode owns independent Philox streams keyed by the master seed and a
purpose tag, with the episode index in the counter. Draws therefore depend
only on ``(seed, episode, purpose)``: not on batch layout, thread count, or
which policy is being simulated. That gives common random numbers across
policies for free.
"""

from __future__ import annotations

import numpy as np

HORIZON, CHANGE_POINT, OBSERVATION = 0, 1, 2

_MASK64 = (1 << 64) - 1


def substream(seed: int, episode: int, purpose: int) -> np.random.Generator:
    if not 0 <= seed <= _MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    bits = np.random.Philox(key=[seed, purpose], counter=[0, 0, episode, 0])
    return np.random.Generator(bits)


def open_unit(gen: np.random.Generator, size=None):
    """Uniform draws on (0, 1], safe to take logarithms of."""
    return 1.0 - gen.random(size)


def geometric(u, log_q: float):
    """Inverse-CDF draw of ``K`` with ``P(K = k) = q^(k-1) (1 - q)``, ``k >= 1``.

    ``log_q`` is ``log(q)``; ``u`` is uniform on (0, 1]. ``log_q = -inf``
    (``q = 0``) always gives 1.
    """
    u = np.asarray(u, dtype=np.float64)
    if log_q == -np.inf:
        return np.ones(u.shape, dtype=np.int64)
    if log_q == 0.0:
        return np.full(u.shape, np.iinfo(np.int64).max // 4, dtype=np.int64)
    k = np.floor(np.log(u) / log_q)
    return (1 + np.minimum(k, 2.0 ** 60)).astype(np.int64)

"""Gradient-based one-side sampling.

Keeps the largest-gradient instances, uniformly subsamples the rest and
amplifies the sampled remainder by ``(1 - top_rate) / other_rate`` so the
aggregate gradient stays unbiased (the LightGBM convention).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError


def epoch_seed(base_seed: int, tree_round: int) -> int:
    """Per-round sampling seed; every participant derives the same one."""
    return (base_seed * 1_000_003 + tree_round) % (2**31 - 1)


def goss_sample(
    g_norms: np.ndarray,
    top_rate: float = 0.2,
    other_rate: float = 0.1,
    rng_seed: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Select instances for one epoch.

    ``g_norms`` is |g| (scalar case) or a per-instance gradient-vector norm.
    Returns ``(indices, multipliers)`` with indices sorted ascending so the
    shared instance order is preserved; multipliers apply to both g and h.
    """
    if not (0.0 < top_rate <= 1.0) or not (0.0 < other_rate <= 1.0):
        raise ConfigError("GOSS rates must be in (0, 1]")
    # top_rate == 1.0 keeps everything; the remainder rate is then irrelevant.
    if top_rate < 1.0 and top_rate + other_rate > 1.0 + 1e-12:
        raise ConfigError("top_rate + other_rate must be <= 1")
    g_norms = np.asarray(g_norms, dtype=np.float64)
    n = g_norms.shape[0]
    n_top = math.ceil(top_rate * n)
    n_other = min(math.ceil(other_rate * n), n - n_top)
    order = np.argsort(-g_norms, kind="stable")
    top = order[:n_top]
    rest = order[n_top:]
    rng = np.random.default_rng(rng_seed)
    sampled = rng.choice(rest, size=n_other, replace=False) if n_other else rest[:0]
    amplify = (1.0 - top_rate) / other_rate
    indices = np.concatenate([top, sampled])
    multipliers = np.concatenate(
        [np.ones(n_top), np.full(len(sampled), amplify)]
    )
    sort = np.argsort(indices, kind="stable")
    return indices[sort].astype(np.int64), multipliers[sort]

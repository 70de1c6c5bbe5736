from __future__ import annotations

import numpy as np

from .errors import StateError


def sample_log_categorical(rng: np.random.Generator, log_weights) -> int:
    """Draw an index with probability proportional to exp(log_weights)."""
    lw = np.asarray(log_weights, dtype=float).ravel()
    top = lw.max()
    if not np.isfinite(top):
        raise StateError("no candidate has positive weight")
    c = np.cumsum(np.exp(lw - top))
    j = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(j, lw.size - 1)


def sample_categorical(rng: np.random.Generator, weights) -> int:
    """Draw an index with probability proportional to non-negative `weights`."""
    c = np.cumsum(np.asarray(weights, dtype=float))
    if not c[-1] > 0:
        raise StateError("weights have no positive mass")
    j = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(j, c.size - 1)

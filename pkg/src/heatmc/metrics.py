"""Convergence diagnostics recorded along a chain.

delta is the unweighted squared data misfit of the current state (the
weighted misfit times sigma^2), beta the squared field error against the
known target when one exists, and gamma the cumulative acceptance count,
whose fitted slope against iteration number estimates the acceptance rate.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class MetricsRow(NamedTuple):
    iteration: int
    alpha: float
    accepted: bool
    d1: float
    d2: float
    d3: float
    z0: float
    delta: float
    beta: float | None
    gamma: int


def delta_at(d: np.ndarray, d_state: np.ndarray) -> float:
    """Unweighted squared misfit of the chain state."""
    d = np.asarray(d, dtype=float)
    d_state = np.asarray(d_state, dtype=float)
    if d.shape != d_state.shape:
        raise ValueError("vectors must have equal length")
    return float(np.sum((d - d_state) ** 2))


def beta_at(k_true: np.ndarray, k: np.ndarray) -> float:
    """Squared field error against the known target."""
    k_true = np.asarray(k_true, dtype=float)
    k = np.asarray(k, dtype=float)
    if k_true.shape != k.shape:
        raise ValueError("fields must have equal shape")
    return float(np.sum((k_true - k) ** 2))


def gamma_slope(iterations: np.ndarray, gamma: np.ndarray) -> float:
    """Least-squares slope of the cumulative acceptance count.

    For a series produced by a chain the slope lies in [0, 1] and matches
    accept_count/iterations up to O(1/iterations).
    """
    iterations = np.asarray(iterations, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if iterations.shape != gamma.shape or iterations.size < 2:
        raise ValueError("need two equal-length series of length >= 2")
    x = iterations - iterations.mean()
    denom = float(np.sum(x * x))
    if denom == 0.0:
        raise ValueError("iteration values must not be all equal")
    return float(np.sum(x * (gamma - gamma.mean())) / denom)

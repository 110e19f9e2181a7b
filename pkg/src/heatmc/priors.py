"""Smoothness functionals used to regularize candidate conductivity fields.

Two penalties are used: the plain roughness (sum of squared differences of
adjacent cells in both grid directions, in raw index space, no mesh-width
scaling) and the same roughness applied to the mixed second derivative
K_xy, which flags checkerboard-like structure that plain roughness misses.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class PriorValues(NamedTuple):
    """Cached penalty values for one field."""
    roughness: float
    mixed: float


def roughness(k: np.ndarray) -> float:
    """Sum of squared adjacent-cell differences, vertical plus horizontal."""
    k = np.asarray(k, dtype=float)
    return float(np.sum(np.diff(k, axis=0) ** 2)
                 + np.sum(np.diff(k, axis=1) ** 2))


def mixed_partial(k: np.ndarray, hx: float, hy: float) -> np.ndarray:
    """Discrete mixed derivative d2K/dxdy at every node.

    Central differences in each direction where both neighbors exist;
    first-order one-sided differences on the edges.  The two directional
    operators act on different indices, so their composition is symmetric,
    and the result is exact for bilinear fields everywhere, edges included.
    """
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] < 2 or k.shape[1] < 2:
        raise ValueError("mixed_partial needs at least a 2x2 field")
    gx = np.empty_like(k)
    gx[:, 1:-1] = (k[:, 2:] - k[:, :-2]) / (2.0 * hx)
    gx[:, 0] = (k[:, 1] - k[:, 0]) / hx
    gx[:, -1] = (k[:, -1] - k[:, -2]) / hx

    gxy = np.empty_like(k)
    gxy[1:-1, :] = (gx[2:, :] - gx[:-2, :]) / (2.0 * hy)
    gxy[0, :] = (gx[1, :] - gx[0, :]) / hy
    gxy[-1, :] = (gx[-1, :] - gx[-2, :]) / hy
    return gxy


def mixed_roughness(k: np.ndarray, hx: float, hy: float) -> float:
    """Roughness of the mixed-derivative field."""
    return roughness(mixed_partial(k, hx, hy))


def prior_values(k: np.ndarray, hx: float, hy: float) -> PriorValues:
    return PriorValues(roughness(k), mixed_roughness(k, hx, hy))

"""Synthetic target conductivity fields for end-to-end experiments.

Coordinates are normalized to [0, 1] in each direction: x runs along
columns, y along rows, so the fields depend only on the node counts, not
on the physical plate size.
"""

from __future__ import annotations

import numpy as np

from .grid import K_MIN


def _coords(n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    y = np.linspace(0.0, 1.0, n)[:, None]
    x = np.linspace(0.0, 1.0, m)[None, :]
    return x, y


def _check(k: np.ndarray) -> np.ndarray:
    if np.any(k <= K_MIN):
        raise ValueError("phantom parameters drive conductivity to the floor")
    return k


def constant(n: int, m: int, value: float = 1.0) -> np.ndarray:
    """Uniform field."""
    return _check(np.full((n, m), float(value)))


def tilted_plane(n: int, m: int, base: float = 1.0, gx: float = 0.5,
                 gy: float = 0.5) -> np.ndarray:
    """Affine ramp base + gx*x + gy*y; its mixed derivative vanishes."""
    x, y = _coords(n, m)
    return _check(base + gx * x + gy * y + np.zeros((n, m)))


def gaussian_well(n: int, m: int, base: float = 1.0, depth: float = 0.5,
                  cx: float = 0.5, cy: float = 0.5,
                  width: float = 0.2) -> np.ndarray:
    """Isotropic Gaussian dip of the given depth centered at (cx, cy).

    Requires depth < base so the well floor stays positive.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    if depth >= base:
        raise ValueError("depth must be smaller than base")
    x, y = _coords(n, m)
    r2 = (x - cx) ** 2 + (y - cy) ** 2
    return _check(base - depth * np.exp(-r2 / (2.0 * width**2)))


PHANTOMS = {
    "constant": constant,
    "tilted_plane": tilted_plane,
    "gaussian_well": gaussian_well,
}


def make_phantom(kind: str, n: int, m: int, **params) -> np.ndarray:
    try:
        fn = PHANTOMS[kind]
    except KeyError:
        raise ValueError(f"unknown phantom kind {kind!r}; "
                         f"expected one of {sorted(PHANTOMS)}") from None
    return fn(n, m, **params)

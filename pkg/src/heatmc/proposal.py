"""Random-walk proposal: shift a 2x2 block of cells by one shared offset.

The anchor (top-left cell of the block) is uniform over the (n-1) x (m-1)
possible positions and the offset is uniform on [-omega_max, omega_max],
shared by all four cells, so the proposal density is symmetric: the move
(anchor, -omega) maps the candidate back onto the current field.

Draw order per proposal is fixed (anchor row, anchor column, offset), which
is part of the reproducibility contract of a chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .grid import K_MIN

BLOCK = 2  # block edge length; a per-cell-offset variant would be a new knob


@dataclass(frozen=True)
class ProposalConfig:
    omega_max: float = 0.005
    k_min: float = K_MIN

    def __post_init__(self):
        if self.omega_max <= 0:
            raise ValueError("omega_max must be positive")
        if self.k_min <= 0:
            raise ValueError("k_min must be positive")


class Proposal(NamedTuple):
    field: np.ndarray
    anchor: tuple[int, int]
    omega: float
    feasible: bool


def propose(k: np.ndarray, rng: np.random.Generator,
            cfg: ProposalConfig) -> Proposal:
    """Candidate field from one block move.

    A candidate that pushes any cell of the block to ``k_min`` or below is
    returned with ``feasible=False`` and must be rejected by the caller
    without evaluating it.
    """
    n, m = k.shape
    ai = int(rng.integers(0, n - BLOCK + 1))
    aj = int(rng.integers(0, m - BLOCK + 1))
    omega = float(rng.uniform(-cfg.omega_max, cfg.omega_max))
    cand = k.copy()
    block = cand[ai:ai + BLOCK, aj:aj + BLOCK]
    block += omega
    feasible = bool(np.all(block > cfg.k_min))
    return Proposal(cand, (ai, aj), omega, feasible)

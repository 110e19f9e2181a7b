"""Normalizer memory for the normalized acceptance rule.

Each difference term entering the acceptance exponent is rescaled by a
multiplier built from a weighted pair of reciprocals: the current magnitude
and a reference magnitude.  The schemes differ only in the reference:

* ``none``   -- all multipliers 1 (plain combined rule),
* ``z1``     -- running maxima over the whole history (not Markov),
* ``z2``     -- the previous iteration's values (Markov),
* ``hybrid`` -- the values at the last *accepted* step for the difference
  terms, previous-iteration value for the outer factor.

The very first evaluated step of a chain has no memory and is computed with
scheme ``none``; its bare exponential and term magnitudes seed the state,
including the last-accepted slots (even if that step is rejected, so the
hybrid scheme always has a reference).

Under ``z1`` the emitted product z0 * alpha_h equals
w0 + (1 - w0) * alpha_h / max(alpha_h, running max), which is pinned to
[w0, 1] -- an algebraic identity the test suite checks on every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .acceptance import DiffTerms

SCHEMES = ("none", "z1", "z2", "hybrid")


@dataclass(frozen=True)
class NormalizerConfig:
    scheme: str = "z2"
    w0: float = 0.1
    w: float = 0.75
    cutoff: float = 1.5
    zeta: float = 0.01
    eps: float = 1e-12
    # None resolves to the shipped default: on for z1, off otherwise
    restricted_interval: bool | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; "
                             f"expected one of {SCHEMES}")
        if not 0.0 <= self.w0 <= 1.0:
            raise ValueError("w0 must lie in [0, 1]")
        if not 0.0 <= self.w <= 1.0:
            raise ValueError("w must lie in [0, 1]")
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if self.zeta < 0:
            raise ValueError("zeta must be nonnegative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.restricted_interval is None:
            object.__setattr__(self, "restricted_interval",
                               self.scheme == "z1")


class NormalizerOutput(NamedTuple):
    """Multipliers handed to the acceptance rule.

    ``zd`` are the per-term multipliers; ``alpha_denom`` is the reference
    entering the outer factor (running max for z1, previous-iteration
    value otherwise; unused for mode 'none').
    """
    zd: tuple[float, float, float]
    w0: float
    alpha_denom: float
    mode: str


@dataclass
class NormalizerState:
    """Mutable chain memory feeding the multipliers.

    Magnitude slots are floored at ``eps`` when stored so the reciprocals
    stay finite.  ``alpha_min``/``alpha_max`` track every evaluated
    acceptance value (any rule) and feed the restricted draw interval.
    """
    initialized: bool = False
    alpha_h_prev: float = 1.0
    alpha_h_max: float = 1.0
    d_prev: tuple[float, float, float] = (1.0, 1.0, 1.0)
    d_max: tuple[float, float, float] = (1.0, 1.0, 1.0)
    d_last_accepted: tuple[float, float, float] = (1.0, 1.0, 1.0)
    alpha_min: float | None = None
    alpha_max: float | None = None

    def to_dict(self) -> dict:
        return {
            "initialized": self.initialized,
            "alpha_h_prev": self.alpha_h_prev,
            "alpha_h_max": self.alpha_h_max,
            "d_prev": list(self.d_prev),
            "d_max": list(self.d_max),
            "d_last_accepted": list(self.d_last_accepted),
            "alpha_min": self.alpha_min,
            "alpha_max": self.alpha_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizerState":
        return cls(
            initialized=bool(d["initialized"]),
            alpha_h_prev=float(d["alpha_h_prev"]),
            alpha_h_max=float(d["alpha_h_max"]),
            d_prev=tuple(float(x) for x in d["d_prev"]),
            d_max=tuple(float(x) for x in d["d_max"]),
            d_last_accepted=tuple(float(x) for x in d["d_last_accepted"]),
            alpha_min=None if d["alpha_min"] is None else float(d["alpha_min"]),
            alpha_max=None if d["alpha_max"] is None else float(d["alpha_max"]),
        )


def z_terms(state: NormalizerState, t: DiffTerms,
            cfg: NormalizerConfig) -> NormalizerOutput:
    """Multipliers for the current difference terms.

    Before the state is seeded every scheme degenerates to ``none``.
    """
    if cfg.scheme == "none" or not state.initialized:
        return NormalizerOutput((1.0, 1.0, 1.0), cfg.w0, float("nan"), "none")

    eps, w = cfg.eps, cfg.w
    mags = (abs(t.d1), abs(t.d2), abs(t.d3))
    if cfg.scheme == "z1":
        ref = tuple(max(sm, cm) for sm, cm in zip(state.d_max, mags))
        denom = state.alpha_h_max
    elif cfg.scheme == "z2":
        ref = state.d_prev
        denom = state.alpha_h_prev
    else:  # hybrid
        ref = state.d_last_accepted
        denom = state.alpha_h_prev
    zd = tuple(w / max(cm, eps) + (1.0 - w) / max(rm, eps)
               for cm, rm in zip(mags, ref))
    return NormalizerOutput(zd, cfg.w0, denom, cfg.scheme)


def update(state: NormalizerState, alpha_h: float, t: DiffTerms,
           accepted: bool, cfg: NormalizerConfig,
           alpha: float | None = None) -> None:
    """Fold one evaluated step into the memory.

    ``alpha_h`` must be positive (the rule's exponent clip guarantees it).
    ``alpha`` is the emitted acceptance value and only feeds the extrema
    used by the restricted draw interval.
    """
    if not alpha_h > 0.0:
        raise ValueError("alpha_h must be positive")
    eps = cfg.eps
    ah = max(alpha_h, eps)
    mags = tuple(max(abs(x), eps) for x in t)
    if not state.initialized:
        state.alpha_h_prev = ah
        state.alpha_h_max = ah
        state.d_prev = mags
        state.d_max = mags
        state.d_last_accepted = mags
        state.initialized = True
    else:
        state.alpha_h_max = max(state.alpha_h_max, ah)
        state.alpha_h_prev = ah
        state.d_max = tuple(max(sm, cm)
                            for sm, cm in zip(state.d_max, mags))
        state.d_prev = mags
        if accepted:
            state.d_last_accepted = mags
    if alpha is not None:
        note_alpha(state, alpha)


def note_alpha(state: NormalizerState, alpha: float) -> None:
    """Track an evaluated acceptance value for the restricted interval."""
    if state.alpha_min is None or alpha < state.alpha_min:
        state.alpha_min = alpha
    if state.alpha_max is None or alpha > state.alpha_max:
        state.alpha_max = alpha


def restricted_bounds(state: NormalizerState,
                      cfg: NormalizerConfig) -> tuple[float, float]:
    """Draw interval for the acceptance comparison.

    (0, 1) until an acceptance value has been seen; afterwards the running
    extrema widened by zeta on each side.  A degenerate interval (possible
    only with zeta = 0) is widened by eps so the draw stays well defined.
    """
    if state.alpha_min is None:
        return 0.0, 1.0
    lo = state.alpha_min - cfg.zeta
    hi = state.alpha_max + cfg.zeta
    if not lo < hi:
        lo -= cfg.eps
        hi += cfg.eps
    return lo, hi

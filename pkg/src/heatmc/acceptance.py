"""Acceptance probabilities for candidate conductivity fields.

Three rules are provided:

* ``alpha_baseline`` -- data misfit only,
* ``alpha_dual`` -- best of two single-penalty branches (roughness branch,
  mixed-roughness branch), the construction whose saturation behaviour
  motivates normalization,
* ``alpha_normalized`` -- all three terms at once, each rescaled by a
  normalizer multiplier, the product then rescaled again and clipped at a
  configurable cutoff (which may exceed 1; any alpha >= 1 accepts).

The misfit convention is f = (1/sigma^2) * sum((d - d_sim)^2) and the data
difference term is half the misfit change, so the baseline rule is the
classic Gaussian-likelihood ratio min{1, exp(-d1)}.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .normalizers import NormalizerOutput

# exp() saturation guard: exponents are clipped to this magnitude so that
# extreme misfit or penalty swings degrade to 0/cap instead of overflowing
_EXP_CLIP = 700.0


class LambdaOrderingError(ValueError):
    """Raised when lambda1 does not dominate lambda2 and lambda3."""


class DiffTerms(NamedTuple):
    """Candidate-minus-current differences entering the exponent."""
    d1: float  # half the misfit change
    d2: float  # roughness change
    d3: float  # mixed-roughness change


@dataclass(frozen=True)
class Sensitivities:
    """Exponent weights and the misfit noise scale.

    The data weight is required to dominate both penalty weights
    (lambda1 > lambda2 and lambda1 > lambda3); configurations that break
    the ordering must say so explicitly via ``allow_unordered``, which
    downgrades the error to a warning.  That escape hatch exists so the
    saturation pathology can be reproduced on purpose.
    """

    lambda1: float = 0.5
    lambda2: float = 0.15
    lambda3: float = 0.45
    sigma: float = 0.1
    allow_unordered: bool = False

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("lambda weights must be nonnegative")
        if not (self.lambda1 > self.lambda2 and self.lambda1 > self.lambda3):
            msg = (
                "data weight must dominate: lambda1 > lambda2 and "
                f"lambda1 > lambda3 (got {self.lambda1}, {self.lambda2}, "
                f"{self.lambda3})"
            )
            if not self.allow_unordered:
                raise LambdaOrderingError(msg)
            warnings.warn(msg + " -- proceeding because allow_unordered is set",
                          stacklevel=2)


def _exp(x: float) -> float:
    return math.exp(min(max(x, -_EXP_CLIP), _EXP_CLIP))


def misfit(d: np.ndarray, d_sim: np.ndarray, sigma: float) -> float:
    """Weighted squared misfit between observed and simulated vectors."""
    d = np.asarray(d, dtype=float)
    d_sim = np.asarray(d_sim, dtype=float)
    if d.shape != d_sim.shape:
        raise ValueError("misfit vectors must have equal length")
    return float(np.sum((d - d_sim) ** 2)) / sigma**2


def diff_terms(f_cand: float, f_curr: float, p_cand, p_curr) -> DiffTerms:
    """Difference terms from candidate/current misfits and prior values."""
    return DiffTerms(
        0.5 * (f_cand - f_curr),
        p_cand.roughness - p_curr.roughness,
        p_cand.mixed - p_curr.mixed,
    )


def alpha_baseline(t: DiffTerms) -> float:
    """Misfit-only Metropolis ratio, in [0, 1]."""
    return min(1.0, _exp(-t.d1))


def alpha_dual(t: DiffTerms, s: Sensitivities) -> float:
    """Better branch of the two single-penalty rules, in [0, 1]."""
    a_rough = min(1.0, _exp(-s.lambda1 * t.d1 - s.lambda2 * t.d2))
    a_mixed = min(1.0, _exp(-s.lambda1 * t.d1 - s.lambda3 * t.d3))
    return max(a_rough, a_mixed)


def alpha_normalized(t: DiffTerms, z: "NormalizerOutput", s: Sensitivities,
                     cutoff: float) -> tuple[float, float, float]:
    """Normalized acceptance value.

    Returns ``(alpha, alpha_h, z0)`` where ``alpha_h`` is the bare
    exponential with the per-term multipliers applied and ``z0`` the outer
    rescaling factor; ``alpha = min(cutoff, z0 * alpha_h)``.  ``alpha_h``
    is always positive and finite thanks to the exponent clip, so it can
    seed the normalizer memory.
    """
    z1, z2, z3 = z.zd
    alpha_h = _exp(-(s.lambda1 * z1 * t.d1
                     + s.lambda2 * z2 * t.d2
                     + s.lambda3 * z3 * t.d3))
    if z.mode == "none":
        z0 = 1.0
    elif z.mode == "z1":
        # running max includes the value being evaluated
        z0 = z.w0 / alpha_h + (1.0 - z.w0) / max(z.alpha_denom, alpha_h)
    else:  # z2 / hybrid: previous-iteration value
        z0 = z.w0 / alpha_h + (1.0 - z.w0) / z.alpha_denom
    return min(cutoff, z0 * alpha_h), alpha_h, z0

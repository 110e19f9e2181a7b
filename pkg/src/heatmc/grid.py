"""Rectangular fin geometry and field containers.

A field is a plain ``(n, m)`` float array: ``n`` node rows in the vertical
(y) direction, ``m`` node columns in the horizontal (x) direction, row 0 at
y = 0.  Grid geometry, the heated contact segment, and the physical
constants of the fin live in :class:`GridSpec`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

# Conductivity fields must stay strictly above this floor; values at or
# below it make the absorption term 2*h_conv/(K*thickness) blow up.
K_MIN = 1e-6


@dataclass(frozen=True)
class GridSpec:
    """Geometry and physical constants of the plate.

    Lengths are in cm, power in W, the convection coefficient in
    W/(cm^2 K).  The heated contact covers the left-edge nodes whose y
    coordinate is at most ``cpu_segment_fraction * ly``.
    """

    n: int = 20
    m: int = 20
    lx: float = 2.0
    ly: float = 2.0
    h_conv: float = 0.005
    thickness: float = 0.1
    power: float = 5.0
    cpu_segment_fraction: float = 0.5

    def __post_init__(self):
        if self.n < 2 or self.m < 2:
            raise ValueError("grid needs at least 2 nodes per side")
        for name in ("lx", "ly", "h_conv", "thickness"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.power < 0:
            raise ValueError("power must be nonnegative")
        if not 0.0 < self.cpu_segment_fraction <= 1.0:
            raise ValueError("cpu_segment_fraction must lie in (0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.m)

    @property
    def hx(self) -> float:
        return self.lx / (self.m - 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.n - 1)

    @property
    def cpu_rows(self) -> tuple[int, ...]:
        """Row indices of left-edge nodes in the heated contact segment."""
        y_max = self.cpu_segment_fraction * self.ly
        # tiny slack so fraction*ly landing exactly on a node keeps it
        return tuple(
            i for i in range(self.n) if i * self.hy <= y_max * (1 + 1e-12)
        )

    @property
    def cpu_segment_length(self) -> float:
        """Arc length of the contact segment along the left edge."""
        return max(len(self.cpu_rows) - 1, 1) * self.hy

    @property
    def q_in(self) -> float:
        """Inward heat flux density on the contact segment, W/cm^2."""
        return self.power / (self.cpu_segment_length * self.thickness)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def validate_conductivity(k: np.ndarray, spec: GridSpec | None = None,
                          k_min: float = K_MIN) -> np.ndarray:
    """Check shape and positivity of a conductivity field; returns it."""
    k = np.asarray(k, dtype=float)
    if k.ndim != 2:
        raise ValueError("conductivity field must be 2-D")
    if spec is not None and k.shape != spec.shape:
        raise ValueError(
            f"field shape {k.shape} does not match grid {spec.shape}"
        )
    if not np.all(np.isfinite(k)):
        raise ValueError("conductivity field has non-finite entries")
    if np.any(k <= k_min):
        raise ValueError(f"conductivity must stay above {k_min}")
    return k


def boundary_indices(n: int, m: int) -> np.ndarray:
    """Flat row-major indices of boundary nodes, in row-major scan order."""
    idx = []
    for i in range(n):
        for j in range(m):
            if i == 0 or i == n - 1 or j == 0 or j == m - 1:
                idx.append(i * m + j)
    return np.asarray(idx, dtype=np.intp)


def boundary_trace(u: np.ndarray) -> np.ndarray:
    """Boundary values of a field in row-major scan order.

    The result has length 2*(n+m) - 4.
    """
    u = np.asarray(u, dtype=float)
    n, m = u.shape
    return u.ravel()[boundary_indices(n, m)]


def embed_boundary(vec: np.ndarray, n: int, m: int) -> np.ndarray:
    """Scatter a boundary vector back onto an (n, m) field of zeros."""
    vec = np.asarray(vec, dtype=float)
    expected = 2 * (n + m) - 4
    if vec.shape != (expected,):
        raise ValueError(f"boundary vector must have length {expected}")
    out = np.zeros(n * m)
    out[boundary_indices(n, m)] = vec
    return out.reshape(n, m)


def write_field_csv(path, field: np.ndarray) -> None:
    """Write a 2-D field as plain CSV, one grid row per line.

    Values are written with shortest round-trip representation, so a
    read-back reproduces the array bit for bit.
    """
    field = np.asarray(field, dtype=float)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in field:
            fh.write(",".join(repr(v) for v in row.tolist()))
            fh.write("\n")


def read_field_csv(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rows.append([float(tok) for tok in line.split(",")])
    if not rows:
        raise ValueError(f"{path}: empty field file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows in field file")
    return np.asarray(rows, dtype=float)


def write_vector_csv(path, vec: np.ndarray) -> None:
    """Write a 1-D vector as an (index, value) CSV with a header line."""
    vec = np.asarray(vec, dtype=float)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("index,value\n")
        for i, v in enumerate(vec.tolist()):
            fh.write(f"{i},{repr(v)}\n")


def read_vector_csv(path) -> np.ndarray:
    vals = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "index,value":
            raise ValueError(f"{path}: expected 'index,value' header")
        for k, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            idx_s, val_s = line.split(",")
            if int(idx_s) != k:
                raise ValueError(f"{path}: index column must run 0,1,2,...")
            vals.append(float(val_s))
    return np.asarray(vals, dtype=float)

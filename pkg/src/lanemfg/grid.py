"""Uniform spatial/time grids, cell projections and P1 interpolation.

The spatial grid carries M uniformly spaced nodes. Each node owns a cell
centered on it and truncated at the domain ends, so |E_0| = |E_{M-1}| =
dx/2 and every interior cell has width dx; the widths sum exactly to the
domain length, which is what makes the transport scheme's mass audit work.

Interpolation is P1 (hat functions): nonnegative partition-of-unity
weights, which both the mass-conservation argument of the transport
scheme and the monotonicity of the value-function scheme rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

__all__ = [
    "SpatialGrid",
    "TimeGrid",
    "build_uniform",
    "locate",
    "basis_weights",
    "p1_interpolate",
    "project_initial",
]

# Feet that miss a node by less than this fraction of a cell are snapped
# onto it, so zero velocity is an exact identity and integer-cell
# displacements translate profiles without numerical diffusion.
_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class SpatialGrid:
    x_lo: float
    x_hi: float
    node_count: int
    nodes: np.ndarray = field(repr=False, compare=False)
    cell_widths: np.ndarray = field(repr=False, compare=False)

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.node_count - 1)

    @property
    def width(self) -> float:
        return self.x_hi - self.x_lo


def build_uniform(x_lo: float, x_hi: float, m: int) -> SpatialGrid:
    """Uniform grid of m nodes on [x_lo, x_hi] with node-centered cells."""
    if not x_lo < x_hi:
        raise ValueError(f"empty spatial domain: [{x_lo}, {x_hi}]")
    if m < 2:
        raise ValueError(f"need at least 2 nodes, got {m}")
    nodes = np.linspace(x_lo, x_hi, m)
    dx = (x_hi - x_lo) / (m - 1)
    widths = np.full(m, dx)
    widths[0] = widths[-1] = 0.5 * dx
    nodes.setflags(write=False)
    widths.setflags(write=False)
    return SpatialGrid(x_lo=x_lo, x_hi=x_hi, node_count=m, nodes=nodes, cell_widths=widths)


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    step_count: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.step_count < 1:
            raise ValueError(f"need at least 1 time step, got {self.step_count}")

    @property
    def dt(self) -> float:
        return self.horizon / self.step_count

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.step_count + 1)


def locate(x, g: SpatialGrid):
    """Cell index and fractional offset of query points, clamped to the domain.

    Returns (i, t) with i in [0, M-2] and t in [0, 1] such that the clamped
    point is x_i + t*dx. Offsets within _SNAP_TOL of a node are snapped.
    """
    c = (np.asarray(x, dtype=float) - g.x_lo) / g.dx
    c = np.clip(c, 0.0, g.node_count - 1)
    nearest = np.rint(c)
    c = np.where(np.abs(c - nearest) <= _SNAP_TOL, nearest, c)
    i = np.minimum(c.astype(int), g.node_count - 2)
    return i, c - i


def basis_weights(x: float, g: SpatialGrid):
    """Hat-function weights of a single query point.

    Returns (left node index, (w_left, w_right)); out-of-domain points are
    clamped to the nearest boundary node first.
    """
    i, t = locate(x, g)
    return int(i), (1.0 - float(t), float(t))


def p1_interpolate(values, x, g: SpatialGrid):
    """Piecewise-linear interpolation of node values; constant beyond the ends."""
    v = np.asarray(values, dtype=float)
    if v.shape[-1] != g.node_count:
        raise ValueError(f"expected {g.node_count} node values, got {v.shape[-1]}")
    i, t = locate(x, g)
    out = (1.0 - t) * v[..., i] + t * v[..., i + 1]
    return out if out.ndim else float(out)


def project_initial(rho0, g: SpatialGrid, samples_per_cell: int = 9) -> np.ndarray:
    """Cell averages of a density profile by composite Simpson quadrature.

    rho0 must accept numpy arrays. samples_per_cell must be odd and >= 3.
    """
    if samples_per_cell < 3 or samples_per_cell % 2 == 0:
        raise ValueError("samples_per_cell must be odd and at least 3")
    half = 0.5 * g.dx
    lo = np.maximum(g.nodes - half, g.x_lo)
    hi = np.minimum(g.nodes + half, g.x_hi)
    offsets = np.linspace(0.0, 1.0, samples_per_cell)
    pts = lo[:, None] + (hi - lo)[:, None] * offsets[None, :]
    vals = np.asarray(rho0(pts), dtype=float)
    integrals = simpson(vals, x=pts, axis=1)
    return integrals / (hi - lo)

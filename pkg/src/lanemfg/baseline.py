"""Uncontrolled multi-lane reference solver.

The conservation law is run in continuity form through the same
semi-Lagrangian transport kernel as the controlled system, with car speed
f(rho)/rho and the relaxation-type lane-exchange source. Shock positions
therefore carry O(dx) smearing, which the reference experiments do not
exercise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import transport
from .grid import SpatialGrid, TimeGrid
from .model import FluxParams, flux_eval

__all__ = ["BaselineParams", "lwr_velocity", "uncontrolled_solve"]

_RHO_TINY = 1e-12


@dataclass(frozen=True)
class BaselineParams:
    """Per-lane exchange time scales of the uncontrolled model."""

    t_left: tuple[float, ...]
    t_right: tuple[float, ...]

    def __post_init__(self):
        for name, rates in (("t_left", self.t_left), ("t_right", self.t_right)):
            if any(not (r > 0 and np.isfinite(r)) for r in rates):
                raise ValueError(f"{name} rates must be positive and finite")


def lwr_velocity(rho, p: FluxParams):
    """Car speed f(rho)/rho, with the free-flow limit a as rho -> 0."""
    r = np.asarray(rho, dtype=float)
    out = np.where(r > _RHO_TINY, flux_eval(r, p) / np.where(r > _RHO_TINY, r, 1.0), p.a)
    return out if out.ndim else float(out)


def uncontrolled_solve(rho0, g: SpatialGrid, tg: TimeGrid, p: FluxParams,
                       bp: BaselineParams) -> transport.TransportRun:
    """Forward march of the uncontrolled multi-lane system."""
    rho0 = np.atleast_2d(np.asarray(rho0, dtype=float))
    n = rho0.shape[0]
    if len(bp.t_left) != n or len(bp.t_right) != n:
        raise ValueError(f"exchange rates must list one value per lane ({n})")

    def velocity_at(_k, rho):
        return lwr_velocity(rho, p)

    def source_at(_k, rho):
        return transport.shvetsov_source(rho, bp.t_left, bp.t_right, p)

    return transport.sweep(rho0, g, tg, velocity_at, source_at)

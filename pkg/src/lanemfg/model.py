"""Model functions for the multi-lane traffic control problem.

Everything here is a pure function of its arguments: the triangular
fundamental diagram, the lane-switching cost, the congestion running cost
and the distance-to-target terminal cost. All evaluators accept scalars or
numpy arrays and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FluxParams",
    "CostParams",
    "TargetSet",
    "flux_eval",
    "critical_density",
    "max_flux",
    "switching_cost",
    "running_cost",
    "terminal_value",
]


@dataclass(frozen=True)
class FluxParams:
    """Coefficients of the triangular flux f(rho) = min(a*rho, b*(rho_max - rho))."""

    a: float
    b: float
    rho_max: float

    def __post_init__(self):
        if not (self.a > 0 and np.isfinite(self.a)):
            raise ValueError(f"flux slope a must be positive, got {self.a}")
        if not (self.b > 0 and np.isfinite(self.b)):
            raise ValueError(f"flux slope b must be positive, got {self.b}")
        if not (self.rho_max > 0 and np.isfinite(self.rho_max)):
            raise ValueError(f"jam density rho_max must be positive, got {self.rho_max}")


@dataclass(frozen=True)
class CostParams:
    """Switching-cost scale kappa and running-cost floor epsilon."""

    kappa: float
    epsilon: float

    def __post_init__(self):
        # kappa = inf is a valid sentinel that disables switching entirely
        if not self.kappa > 0:
            raise ValueError(f"switching cost kappa must be strictly positive, got {self.kappa}")
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise ValueError(f"running-cost floor epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class TargetSet:
    """Destination set: (position, lane) pairs. Distances use position only."""

    points: tuple[tuple[float, int], ...]

    def __post_init__(self):
        if len(self.points) == 0:
            raise ValueError("target set must contain at least one point")

    @property
    def positions(self) -> np.ndarray:
        return np.asarray([p for p, _ in self.points], dtype=float)


def flux_eval(rho, p: FluxParams):
    """Triangular fundamental diagram min(a*rho, b*(rho_max - rho)).

    Negative densities are clamped to 0 before evaluation. The result is
    negative only for rho > rho_max, which callers may treat as an
    overshoot signal.
    """
    r = np.maximum(np.asarray(rho, dtype=float), 0.0)
    out = np.minimum(p.a * r, p.b * (p.rho_max - r))
    return out if out.ndim else float(out)


def critical_density(p: FluxParams) -> float:
    """Density b/(a+b) * rho_max at which the flux peaks."""
    return p.b / (p.a + p.b) * p.rho_max


def max_flux(p: FluxParams) -> float:
    """Peak flux a*b/(a+b) * rho_max, attained at the critical density."""
    return p.a * p.b / (p.a + p.b) * p.rho_max


def switching_cost(alpha, beta, c: CostParams):
    """Cost kappa * |alpha - beta| of jumping between lane indices."""
    out = c.kappa * np.abs(np.asarray(alpha) - np.asarray(beta))
    return out if out.ndim else float(out)


def running_cost(rho, c: CostParams, p: FluxParams):
    """Congestion penalty 1 / max(rho_max - rho, epsilon), in (0, 1/epsilon].

    Negative densities are clamped to 0 first, mirroring flux_eval.
    """
    r = np.maximum(np.asarray(rho, dtype=float), 0.0)
    out = 1.0 / np.maximum(p.rho_max - r, c.epsilon)
    return out if out.ndim else float(out)


def terminal_value(x, t: TargetSet):
    """Distance from position x to the nearest target position (lane-uniform)."""
    xs = np.asarray(x, dtype=float)
    d = np.abs(xs[..., None] - t.positions).min(axis=-1)
    return d if d.ndim else float(d)

"""Policy iteration for the coupled forward-backward system.

Each outer iteration runs the density forward under the current feedback
policies, mixes the result into the retained trajectory (damping), and
re-solves the value function backward on the mixed trajectory to improve
the policies. Iteration stops when the fraction of changed policy cells
and the sup-norm value change both fall under their tolerances.

The stored solution densities are a final undamped forward run under the
final policies, so rho_traj and the policy trajectories correspond
exactly; the damped mix only steers the backward solves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import hjb, transport
from .grid import SpatialGrid, TimeGrid
from .model import CostParams, FluxParams, TargetSet, critical_density, flux_eval, max_flux

__all__ = ["SolverOptions", "MfgSolution", "Iterate", "initialize_policies", "residuals", "solve"]

logger = logging.getLogger(__name__)

DRIFT_MODES = ("optimal-control", "literal-gradient")
MIXING_MODES = ("constant", "harmonic")


@dataclass(frozen=True)
class SolverOptions:
    """Outer-loop controls. tol_value=None resolves to 1e-6 * domain width.

    mixing="constant" blends each new density trajectory with weight
    `damping`; mixing="harmonic" averages all forward runs seen so far
    (weight 1/m at iteration m), which converges on problems where the
    constant blend cycles.
    """

    max_outer_iters: int = 50
    tol_policy: float = 1e-3
    tol_value: float | None = None
    damping: float = 0.5
    mixing: str = "constant"

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.tol_policy < 0:
            raise ValueError("tol_policy must be nonnegative")
        if self.tol_value is not None and self.tol_value < 0:
            raise ValueError("tol_value must be nonnegative")
        if self.mixing not in MIXING_MODES:
            raise ValueError(f"mixing must be one of {MIXING_MODES}, got {self.mixing!r}")


class Iterate(NamedTuple):
    """One outer iterate: policies, values and the density they were built on."""

    u_idx: np.ndarray  # (N, n, M)
    q_target: np.ndarray  # (N, n, M)
    values: np.ndarray  # (N+1, n, M)
    rho_traj: np.ndarray  # (N+1, n, M)


@dataclass
class MfgSolution:
    rho_traj: np.ndarray  # (N+1, n, M)
    value_traj: np.ndarray  # (N+1, n, M)
    u_traj: np.ndarray  # (N, n, M) control indices
    q_traj: np.ndarray  # (N, n, M) switch targets, 1-based
    iterations: int
    converged: bool
    residual_history: list[tuple[float, float, float]] = field(default_factory=list)
    outflow_cum: np.ndarray | None = None  # (N+1,)
    clamped_cum: np.ndarray | None = None  # (N+1,)
    clamp_flagged: bool = False


def _supply_caps(rho, p, reach):
    """Speeds admitted by the nearby cells, as (leftward, rightward).

    `reach` is the number of cells a foot can traverse in one step; the
    admitted speed is the most restrictive over that window, since the cap
    is useless if feet can hop over a jammed cell. A free cell (density
    below critical) does not constrain; a congested one admits at most its
    own f. Beyond the domain the road is treated as free. Without this cap
    the frozen velocity field lets compressive fronts pile mass far beyond
    the jam density, which the underlying conservation law (whose entropy
    solutions satisfy a maximum principle) never does.
    """
    f = flux_eval(rho, p)
    rbar = critical_density(p)
    admit = np.where(rho <= rbar, np.inf, np.maximum(f, 0.0))
    sup_r = np.full_like(f, np.inf)
    sup_l = np.full_like(f, np.inf)
    for off in range(1, reach + 1):
        sup_r[:, :-off] = np.minimum(sup_r[:, :-off], admit[:, off:])
        sup_l[:, off:] = np.minimum(sup_l[:, off:], admit[:, :-off])
    return sup_l, sup_r


def _velocity_at(drift, controls, p, u_traj, values, g, dt):
    """Per-step drift builder for the forward sweep."""
    reach = max(1, int(np.ceil(dt * max_flux(p) / g.dx)))
    if drift == "optimal-control":
        u_levels = controls.values

        def velocity(k, rho):
            # negative f on an over-jammed cell is kept: it relaxes the
            # excess backward instead of freezing it
            _, sup_r = _supply_caps(rho, p, reach)
            return u_levels[u_traj[k]] * np.minimum(flux_eval(rho, p), sup_r)

    elif drift == "literal-gradient":

        def velocity(k, rho):
            vx = np.gradient(values[k], g.dx, axis=1)
            sup_l, sup_r = _supply_caps(rho, p, reach)
            return np.clip(-vx * flux_eval(rho, p), -sup_l, sup_r)

    else:
        raise ValueError(f"unknown drift mode {drift!r}; expected one of {DRIFT_MODES}")
    return velocity


def _forward(rho0, g, tg, p, controls, u_traj, q_traj, values, drift) -> transport.TransportRun:
    velocity = _velocity_at(drift, controls, p, u_traj, values, g, tg.dt)

    def source(k, rho):
        return transport.mfg_source(rho, q_traj[k], p)

    return transport.sweep(rho0, g, tg, velocity, source)


def initialize_policies(rho0, g: SpatialGrid, tg: TimeGrid, controls: hjb.ControlSet,
                        c: CostParams, p: FluxParams, tgt: TargetSet) -> hjb.BackwardResult:
    """Starting policies from a backward solve on the initial density frozen in time."""
    rho0 = np.atleast_2d(np.asarray(rho0, dtype=float))
    frozen = np.broadcast_to(rho0, (tg.step_count + 1,) + rho0.shape)
    return hjb.solve_backward(frozen, g, tg, controls, c, p, tgt)


def residuals(prev: Iterate, nxt: Iterate, g: SpatialGrid, tg: TimeGrid):
    """(policy-change fraction, value sup-norm change, density L1 change)."""
    changed = (prev.u_idx != nxt.u_idx) | (prev.q_target != nxt.q_target)
    policy_change = float(changed.mean())
    value_change = float(np.abs(prev.values - nxt.values).max())
    density_change = float((np.abs(prev.rho_traj - nxt.rho_traj) @ g.cell_widths).sum() * tg.dt)
    return policy_change, value_change, density_change


def solve(rho0, g: SpatialGrid, tg: TimeGrid, p: FluxParams, c: CostParams,
          controls: hjb.ControlSet, tgt: TargetSet, drift: str = "optimal-control",
          options: SolverOptions | None = None) -> MfgSolution:
    """Solve the coupled system by policy iteration.

    Non-convergence within max_outer_iters is flagged on the returned
    solution, not raised.
    """
    opts = options or SolverOptions()
    if drift not in DRIFT_MODES:
        raise ValueError(f"unknown drift mode {drift!r}; expected one of {DRIFT_MODES}")
    tol_value = opts.tol_value if opts.tol_value is not None else 1e-6 * g.width
    if tg.dt * p.a > 1.0:
        logger.warning("dt*a = %.3g > 1: positivity clamp may engage", tg.dt * p.a)

    rho0 = np.atleast_2d(np.asarray(rho0, dtype=float))
    back = initialize_policies(rho0, g, tg, controls, c, p, tgt)
    frozen = np.broadcast_to(rho0, (tg.step_count + 1,) + rho0.shape)
    current = Iterate(back.u_idx, back.q_target, back.values, frozen)

    history: list[tuple[float, float, float]] = []
    converged = False
    iterations = 0
    for it in range(1, opts.max_outer_iters + 1):
        run = _forward(rho0, g, tg, p, controls, current.u_idx, current.q_target,
                       current.values, drift)
        if it == 1:
            rho_mix = run.rho_traj
        elif opts.mixing == "harmonic":
            rho_mix = current.rho_traj + (run.rho_traj - current.rho_traj) / it
        else:
            rho_mix = opts.damping * run.rho_traj + (1.0 - opts.damping) * current.rho_traj
        back = hjb.solve_backward(rho_mix, g, tg, controls, c, p, tgt)
        nxt = Iterate(back.u_idx, back.q_target, back.values, rho_mix)

        res = residuals(current, nxt, g, tg)
        history.append(res)
        current = nxt
        iterations = it
        if res[0] <= opts.tol_policy and res[1] <= tol_value:
            converged = True
            break

    if not converged:
        logger.warning("policy iteration did not converge within %d iterations", iterations)

    final = _forward(rho0, g, tg, p, controls, current.u_idx, current.q_target,
                     current.values, drift)
    return MfgSolution(
        rho_traj=final.rho_traj,
        value_traj=current.values,
        u_traj=current.u_idx,
        q_traj=current.q_target,
        iterations=iterations,
        converged=converged,
        residual_history=history,
        outflow_cum=final.outflow_cum,
        clamped_cum=final.clamped_cum,
        clamp_flagged=final.clamp_flagged,
    )

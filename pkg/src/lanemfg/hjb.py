"""Backward semi-Lagrangian solver for the lane-switching value function.

Each backward step takes the value slice at the next time level and the
current density slice and solves, at every node and lane, the fixed-point
form

    V(x_j, a) = min( Sigma(x_j, a, V_next),  Psi(x_j, a, V) )

where Sigma is the semi-Lagrangian Hamiltonian minimization over a finite
control set (pay dt * running cost, move to the foot x_j + dt*u*f(rho_a),
interpolate V_next there) and Psi is the switching obstacle: the best
value of jumping to another lane plus the lateral cost kappa*|a - b|.
Psi references the value slice at the SAME time level, so each step runs
a short inner iteration; with a strictly positive switching cost the
chain of profitable jumps settles in fewer than n passes.

Lane labels are 1-based throughout (q_target values live in 1..n); array
axes are 0-based as usual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .grid import SpatialGrid, TimeGrid, locate
from .model import CostParams, FluxParams, TargetSet, flux_eval, running_cost, terminal_value

__all__ = [
    "SolverError",
    "ControlSet",
    "PolicySlice",
    "BackwardResult",
    "terminal_slice",
    "jump_operator",
    "hamiltonian_step",
    "qvi_backward_step",
    "solve_backward",
]


class SolverError(RuntimeError):
    """Raised when a solver step cannot complete (invalid configuration)."""


@dataclass(frozen=True)
class ControlSet:
    """Discretization of the speed-fraction control set [0, 1]."""

    levels: tuple[float, ...]

    def __post_init__(self):
        lv = self.levels
        if len(lv) < 2 or lv[0] != 0.0 or lv[-1] != 1.0:
            raise ValueError("control levels must start at 0 and end at 1")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError("control levels must be strictly increasing")

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=float)


class PolicySlice(NamedTuple):
    """Feedback policy at one time level."""

    u_idx: np.ndarray  # (n, M) index into the control levels
    q_target: np.ndarray  # (n, M) switch target, 1-based; own lane = stay


class BackwardResult(NamedTuple):
    values: np.ndarray  # (N+1, n, M)
    u_idx: np.ndarray  # (N, n, M)
    q_target: np.ndarray  # (N, n, M)


def terminal_slice(g: SpatialGrid, n_lanes: int, tgt: TargetSet) -> np.ndarray:
    """Terminal values: distance to the target set, identical on every lane."""
    return np.tile(terminal_value(g.nodes, tgt), (n_lanes, 1))


def jump_operator(v, c: CostParams):
    """Best switch value min over b != a of V(x, b) + kappa*|a - b|.

    Returns (psi, target) where target holds the 1-based argmin lane.
    Ties prefer the smaller |b - a|, then the smaller b. With a single
    lane the min is over the empty set: psi is +inf.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    n, m = v.shape
    psi = np.full_like(v, np.inf)
    target = np.empty((n, m), dtype=np.int64)
    for a in range(n):
        target[a] = a + 1
        best = np.full(m, np.inf)
        for b in sorted((b for b in range(n) if b != a), key=lambda b: (abs(b - a), b)):
            cand = v[b] + c.kappa * abs(a - b)
            better = cand < best
            best = np.where(better, cand, best)
            target[a] = np.where(better, b + 1, target[a])
        psi[a] = best
    return psi, target


def hamiltonian_step(v_next, rho, g: SpatialGrid, dt: float, controls: ControlSet,
                     c: CostParams, p: FluxParams):
    """Semi-Lagrangian minimization over the control set, per node and lane.

    The movement speed is u*f(rho), taken literally: it is nonnegative in
    every valid state and turns negative only on a congested overshoot
    (rho > rho_max), where probing leftward feet lets the minimizer relax
    over-compressed mass backward instead of freezing it. Feet beyond the
    domain interpolate the boundary node value. Ties in the control argmin
    resolve to the largest u.

    Returns (values, u_idx).
    """
    v_next = np.atleast_2d(np.asarray(v_next, dtype=float))
    rho = np.atleast_2d(np.asarray(rho, dtype=float))
    n = v_next.shape[0]
    u = controls.values
    k = u.size

    speed = flux_eval(rho, p)
    ell = running_cost(rho, c, p)
    feet = g.nodes[None, :, None] + dt * speed[:, :, None] * u[None, None, :]
    i, t = locate(feet, g)
    lane = np.arange(n)[:, None, None]
    interp = (1.0 - t) * v_next[lane, i] + t * v_next[lane, i + 1]
    total = dt * ell[:, :, None] + interp

    u_idx = (k - 1) - np.argmin(total[:, :, ::-1], axis=2)
    return np.min(total, axis=2), u_idx


def qvi_backward_step(v_next, rho, g: SpatialGrid, dt: float, controls: ControlSet,
                      c: CostParams, p: FluxParams):
    """One backward step of the obstacle problem.

    Starts from the Hamiltonian branch W and lowers it with profitable
    switches until no entry changes; a switch chain is composed down to
    its final target (jump costs are additive along monotone chains).
    q_target stays at the own lane wherever no switch strictly improves.
    """
    w, u_idx = hamiltonian_step(v_next, rho, g, dt, controls, c, p)
    n, m = w.shape
    q = np.repeat(np.arange(1, n + 1, dtype=np.int64)[:, None], m, axis=1)
    if n == 1:
        return w, PolicySlice(u_idx=u_idx, q_target=q)

    v = w.copy()
    cols = np.arange(m)[None, :]
    for _ in range(n):
        psi, tgt = jump_operator(v, c)
        improved = psi < v
        if not improved.any():
            return v, PolicySlice(u_idx=u_idx, q_target=q)
        q = np.where(improved, q[tgt - 1, cols], q)
        v = np.where(improved, psi, v)
    raise SolverError(
        "switch fixed point did not settle within the lane count; "
        "this indicates a non-positive switching cost"
    )


def solve_backward(rho_traj, g: SpatialGrid, tg: TimeGrid, controls: ControlSet,
                   c: CostParams, p: FluxParams, tgt: TargetSet) -> BackwardResult:
    """March the value function from the terminal slice back to t = 0.

    rho_traj has shape (N+1, n, M); the step from level k+1 to k evaluates
    running cost and dynamics on the density at level k. Policies exist on
    levels 0..N-1.
    """
    rho_traj = np.asarray(rho_traj, dtype=float)
    n_steps = tg.step_count
    if rho_traj.shape[0] != n_steps + 1:
        raise ValueError(f"density trajectory has {rho_traj.shape[0]} levels, expected {n_steps + 1}")
    n, m = rho_traj.shape[1:]

    values = np.empty((n_steps + 1, n, m))
    u_idx = np.empty((n_steps, n, m), dtype=np.int16)
    q_target = np.empty((n_steps, n, m), dtype=np.int16)
    values[n_steps] = terminal_slice(g, n, tgt)
    for k in range(n_steps - 1, -1, -1):
        v, pol = qvi_backward_step(values[k + 1], rho_traj[k], g, tg.dt, controls, c, p)
        values[k] = v
        u_idx[k] = pol.u_idx
        q_target[k] = pol.q_target
    return BackwardResult(values=values, u_idx=u_idx, q_target=q_target)

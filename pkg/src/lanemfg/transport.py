"""Semi-Lagrangian forward solver for the per-lane continuity equations.

One step pushes each node's cell mass forward along the discrete
characteristic x_j + dt*v_j and deposits it on the two bracketing nodes
with hat weights (the G operator), then adds dt times the lane-exchange
source. Mass is conserved exactly for feet that stay inside the domain
because the hat weights form a partition of unity.

Boundary rule: a foot that leaves the domain by at most half a cell
deposits on the boundary node; beyond that the mass exits the system and
is recorded as outflow. Negative values produced by sources are clamped
to zero and the clamped mass is recorded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .grid import SpatialGrid, TimeGrid, locate
from .model import FluxParams, flux_eval

__all__ = [
    "StepInfo",
    "TransportRun",
    "characteristic_feet",
    "g_operator",
    "mfg_source",
    "shvetsov_source",
    "forward_step",
    "total_mass",
    "sweep",
]

logger = logging.getLogger(__name__)

# Fraction of total mass above which per-step clamping is flagged.
CLAMP_WARN_FRACTION = 1e-6

# Lane changes into a nearly jammed lane fade out linearly over the last
# quarter before the jam density. Without this cap a stale switch policy
# can pump a receiving lane far beyond rho_max, where both its transport
# speed and its outgoing exchange rate vanish and the mass freezes for
# the rest of the run.
EXCHANGE_FADE_START = 0.75


@dataclass(frozen=True)
class StepInfo:
    """Mass bookkeeping for one forward step (summed over lanes)."""

    outflow: float
    clamped: float
    clamp_flagged: bool


@dataclass
class TransportRun:
    """Density trajectory plus its cumulative mass ledger.

    outflow_cum[k] and clamped_cum[k] hold the totals accumulated over
    steps 0..k-1, so mass at level k should equal the initial mass minus
    outflow_cum[k] plus clamped_cum[k].
    """

    rho_traj: np.ndarray  # (N+1, n, M)
    outflow_cum: np.ndarray  # (N+1,)
    clamped_cum: np.ndarray  # (N+1,)
    clamp_flagged: bool = False


def characteristic_feet(vel, g: SpatialGrid, dt: float):
    """Forward feet x_j + dt*v_j; vel may be (M,) or (n, M)."""
    return g.nodes + dt * np.asarray(vel, dtype=float)


def g_operator(w, feet, g: SpatialGrid):
    """Scatter cell masses w_j*|E_j| onto the nodes bracketing each foot.

    Returns (densities, outflow): the redeposited per-node densities and
    the mass that left the domain by more than half a cell. Deposits carry
    the width ratio |E_j|/|E_i|, which is exactly 1.0 between interior
    cells, so zero velocity is a bitwise identity and integer-cell
    displacements translate profiles without numerical diffusion.
    """
    w = np.asarray(w, dtype=float)
    feet = np.asarray(feet, dtype=float)
    cw = g.cell_widths
    grace = 0.5 * g.dx

    exited = (feet < g.x_lo - grace) | (feet > g.x_hi + grace)
    outflow = float((w[exited] * cw[exited]).sum())

    kept = ~exited
    # feet inside the grace zone clamp onto the boundary node via locate
    i, t = locate(feet[kept], g)
    wk = w[kept]
    ratio = cw[kept]
    acc = np.bincount(i, weights=wk * (1.0 - t) * (ratio / cw[i]), minlength=g.node_count)
    acc += np.bincount(i + 1, weights=wk * t * (ratio / cw[i + 1]), minlength=g.node_count)
    return acc, outflow


def mfg_source(rho, q, p: FluxParams):
    """Lane-exchange rates driven by the switch policy q (1-based lane labels).

    Lane alpha at node i transfers rate f(rho_alpha) to q(alpha, i) when a
    switch is prescribed; the donor loses exactly what the target gains,
    so the lane sum vanishes at every node. The transferred rate is floored
    at zero (a car flow cannot be negative) and fades to zero as the
    receiving lane approaches the jam density.
    """
    rho = np.asarray(rho, dtype=float)
    q = np.asarray(q)
    n = rho.shape[0]
    if q.shape != rho.shape:
        raise ValueError(f"switch targets shape {q.shape} != density shape {rho.shape}")
    if q.min() < 1 or q.max() > n:
        raise ValueError(f"switch targets must lie in 1..{n}, got range [{q.min()}, {q.max()}]")

    flux = np.maximum(flux_eval(rho, p), 0.0)
    room = np.clip((p.rho_max - rho) / ((1.0 - EXCHANGE_FADE_START) * p.rho_max), 0.0, 1.0)
    src = np.zeros_like(rho)
    lanes = np.arange(1, n + 1)[:, None]
    switching = q != lanes
    for a in range(n):
        cols = np.nonzero(switching[a])[0]
        tgt = q[a, cols] - 1
        transfer = flux[a, cols] * room[tgt, cols]
        src[a, cols] -= transfer
        np.add.at(src, (tgt, cols), transfer)
    return src


def shvetsov_source(rho, t_left, t_right, p: FluxParams):
    """Relaxation-type exchange terms of the uncontrolled multi-lane model.

    t_left[a] and t_right[a] are the (positive) time scales of lane a's
    exchange across its two interfaces; boundary lanes have one interface.
    """
    rho = np.asarray(rho, dtype=float)
    n = rho.shape[0]
    tl = np.asarray(t_left, dtype=float)[:, None]
    tr = np.asarray(t_right, dtype=float)[:, None]
    if np.any(tl <= 0) or np.any(tr <= 0):
        raise ValueError("exchange time scales must be positive")

    dl = flux_eval(rho, p) / tl
    dr = flux_eval(rho, p) / tr
    src = np.zeros_like(rho)
    # interface with lane alpha-1 (absent for the first lane)
    src[1:] += dl[:-1] - dr[1:]
    # interface with lane alpha+1 (absent for the last lane)
    src[:-1] += dr[1:] - dl[:-1]
    return src


def forward_step(rho, vel, src, g: SpatialGrid, dt: float):
    """One explicit step: G operator plus dt times the source, per lane.

    Returns (new densities, StepInfo). Negative results are clamped to 0
    and the added mass recorded; clamping beyond CLAMP_WARN_FRACTION of
    the current total mass is flagged in the StepInfo.
    """
    rho = np.atleast_2d(np.asarray(rho, dtype=float))
    vel = np.atleast_2d(np.asarray(vel, dtype=float))
    src = np.atleast_2d(np.asarray(src, dtype=float))
    out = np.empty_like(rho)
    outflow = 0.0
    for a in range(rho.shape[0]):
        feet = characteristic_feet(vel[a], g, dt)
        out[a], lost = g_operator(rho[a], feet, g)
        outflow += lost
    out += dt * src

    neg = np.minimum(out, 0.0)
    clamped = float(-(neg * g.cell_widths).sum())
    if clamped > 0.0:
        out = np.maximum(out, 0.0)
    total = float((rho * g.cell_widths).sum())
    flagged = clamped > CLAMP_WARN_FRACTION * total if total > 0 else clamped > 0
    return out, StepInfo(outflow=outflow, clamped=clamped, clamp_flagged=flagged)


def total_mass(rho, g: SpatialGrid):
    """(per-lane masses, grand total) of a density slice."""
    rho = np.atleast_2d(np.asarray(rho, dtype=float))
    per_lane = rho @ g.cell_widths
    return per_lane, float(per_lane.sum())


def sweep(rho0, g: SpatialGrid, tg: TimeGrid, velocity_at, source_at) -> TransportRun:
    """March the density forward over the whole horizon.

    velocity_at(k, rho_k) and source_at(k, rho_k) supply the per-lane,
    per-node velocity and source for step k -> k+1.
    """
    rho0 = np.atleast_2d(np.asarray(rho0, dtype=float))
    n_steps = tg.step_count
    traj = np.empty((n_steps + 1,) + rho0.shape)
    traj[0] = rho0
    outflow = np.zeros(n_steps + 1)
    clamped = np.zeros(n_steps + 1)
    flagged = False
    dt = tg.dt
    for k in range(n_steps):
        vel = velocity_at(k, traj[k])
        src = source_at(k, traj[k])
        traj[k + 1], info = forward_step(traj[k], vel, src, g, dt)
        outflow[k + 1] = outflow[k] + info.outflow
        clamped[k + 1] = clamped[k] + info.clamped
        if info.clamp_flagged and not flagged:
            flagged = True
            logger.warning(
                "step %d clamped %.3e of mass (> %.0e of total)",
                k, info.clamped, CLAMP_WARN_FRACTION,
            )
    return TransportRun(rho_traj=traj, outflow_cum=outflow, clamped_cum=clamped, clamp_flagged=flagged)

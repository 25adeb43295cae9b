"""Scenario files: strict JSON schema, presets, and problem assembly.

A scenario is one JSON object whose keys mirror the Scenario fields.
Unknown keys are rejected and validation reports every violation, not
just the first. The preset names `paper-sec6` and `paper-sec6-coarse`
expand to the built-in 3-lane experiment at full and reduced resolution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .baseline import BaselineParams
from .grid import SpatialGrid, TimeGrid, build_uniform, project_initial
from .hjb import ControlSet
from .mfg import DRIFT_MODES, SolverOptions
from .model import CostParams, FluxParams, TargetSet

__all__ = [
    "ScenarioError",
    "InitialDensity",
    "Scenario",
    "PRESETS",
    "preset",
    "scenario_from_dict",
    "scenario_to_dict",
    "parse_scenario",
    "write_scenario",
    "density_functions",
    "initial_field",
    "spatial_grid",
    "time_grid",
    "control_set",
    "target_set",
    "baseline_params",
]

DENSITY_PRESETS = ("paper-sec6",)


class ScenarioError(ValueError):
    """Invalid scenario; carries the full list of violations."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass(frozen=True)
class InitialDensity:
    """Either a named preset or per-lane [x, value] sample tables."""

    preset: str | None = None
    samples: tuple[tuple[tuple[float, float], ...], ...] | None = None


@dataclass(frozen=True)
class Scenario:
    lanes: int
    domain: tuple[float, float]
    horizon: float
    node_count: int
    step_count: int
    flux: FluxParams
    cost: CostParams
    control_levels: tuple[float, ...]
    target: tuple[tuple[float, int], ...]
    initial_density: InitialDensity
    drift: str
    solver: SolverOptions
    snapshot_times: tuple[float, ...]
    exchange_t_left: tuple[float, ...]
    exchange_t_right: tuple[float, ...]

    @property
    def dx(self) -> float:
        return (self.domain[1] - self.domain[0]) / (self.node_count - 1)

    @property
    def dt(self) -> float:
        return self.horizon / self.step_count


def _sec6_dict(node_count: int, step_count: int) -> dict:
    return {
        "lanes": 3,
        "domain": [0.0, 25.0],
        "horizon": 25.0,
        "node_count": node_count,
        "step_count": step_count,
        "flux": {"a": 3.0, "b": 1.0, "rho_max": 1.0},
        "cost": {"kappa": 1.0, "epsilon": 1e-5},
        "control_levels": [round(0.1 * i, 1) for i in range(11)],
        "target": [[25.0, 1], [25.0, 2], [25.0, 3]],
        "initial_density": {"preset": "paper-sec6"},
        "drift": "optimal-control",
        # harmonic mixing: constant damping dithers on this scenario
        "solver": {"max_outer_iters": 50, "tol_policy": 1e-3, "tol_value": 2.5e-5,
                   "damping": 0.5, "mixing": "harmonic"},
        "snapshot_times": [0.0, 10.0, 12.5, 25.0],
    }


PRESETS = {
    "paper-sec6": lambda: _sec6_dict(5001, 2500),
    "paper-sec6-coarse": lambda: _sec6_dict(501, 500),
}


def preset(name: str) -> Scenario:
    if name not in PRESETS:
        raise ScenarioError([f"unknown preset {name!r}; available: {sorted(PRESETS)}"])
    return scenario_from_dict(PRESETS[name]())


def _check_keys(d, allowed, path, errors) -> bool:
    if not isinstance(d, dict):
        errors.append(f"{path}: expected an object")
        return False
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        errors.append(f"{path}: unknown key(s) {unknown}")
    return True


def _number(d, key, path, errors, default=None, required=True):
    if key not in d:
        if required:
            errors.append(f"{path}.{key}: missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        errors.append(f"{path}.{key}: expected a finite number, got {v!r}")
        return default
    return float(v)


def _integer(d, key, path, errors):
    if key not in d:
        errors.append(f"{path}.{key}: missing")
        return None
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        errors.append(f"{path}.{key}: expected an integer, got {v!r}")
        return None
    return v


def scenario_from_dict(data: dict) -> Scenario:
    """Validate a raw scenario dict; raises ScenarioError listing every problem."""
    errors: list[str] = []
    top_keys = (
        "lanes", "domain", "horizon", "node_count", "step_count", "flux", "cost",
        "control_levels", "target", "initial_density", "drift", "solver",
        "snapshot_times", "exchange", "per_lane_flux",
    )
    if not _check_keys(data, top_keys, "scenario", errors):
        raise ScenarioError(errors)

    lanes = _integer(data, "lanes", "scenario", errors)
    if lanes is not None and lanes < 1:
        errors.append(f"scenario.lanes: must be at least 1, got {lanes}")

    domain = data.get("domain")
    x_lo = x_hi = None
    if not (isinstance(domain, (list, tuple)) and len(domain) == 2):
        errors.append("scenario.domain: expected [x_lo, x_hi]")
    else:
        x_lo, x_hi = float(domain[0]), float(domain[1])
        if not x_lo < x_hi:
            errors.append(f"scenario.domain: empty interval [{x_lo}, {x_hi}]")

    horizon = _number(data, "horizon", "scenario", errors)
    if horizon is not None and horizon <= 0:
        errors.append(f"scenario.horizon: must be positive, got {horizon}")
    node_count = _integer(data, "node_count", "scenario", errors)
    if node_count is not None and node_count < 2:
        errors.append(f"scenario.node_count: must be at least 2, got {node_count}")
    step_count = _integer(data, "step_count", "scenario", errors)
    if step_count is not None and step_count < 1:
        errors.append(f"scenario.step_count: must be at least 1, got {step_count}")

    flux = data.get("flux")
    a = b = rho_max = None
    if flux is None:
        errors.append("scenario.flux: missing")
    elif _check_keys(flux, ("a", "b", "rho_max"), "scenario.flux", errors):
        a = _number(flux, "a", "scenario.flux", errors)
        b = _number(flux, "b", "scenario.flux", errors)
        rho_max = _number(flux, "rho_max", "scenario.flux", errors)
        for name, v in (("a", a), ("b", b), ("rho_max", rho_max)):
            if v is not None and v <= 0:
                errors.append(f"scenario.flux.{name}: must be positive, got {v}")

    cost = data.get("cost")
    kappa = epsilon = None
    if cost is None:
        errors.append("scenario.cost: missing")
    elif _check_keys(cost, ("kappa", "epsilon"), "scenario.cost", errors):
        kappa = _number(cost, "kappa", "scenario.cost", errors)
        epsilon = _number(cost, "epsilon", "scenario.cost", errors)
        if kappa is not None and kappa <= 0:
            errors.append(f"scenario.cost.kappa: must be strictly positive, got {kappa}")
        if epsilon is not None and epsilon <= 0:
            errors.append(f"scenario.cost.epsilon: must be positive, got {epsilon}")

    levels = data.get("control_levels")
    if not (isinstance(levels, (list, tuple)) and len(levels) >= 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in levels)):
        errors.append("scenario.control_levels: expected a list of at least two numbers")
        levels = None
    else:
        levels = tuple(float(v) for v in levels)
        if levels[0] != 0.0 or levels[-1] != 1.0:
            errors.append("scenario.control_levels: must contain 0 first and 1 last")
        if any(y <= x for x, y in zip(levels, levels[1:])):
            errors.append("scenario.control_levels: must be strictly increasing")

    target_raw = data.get("target")
    target: list[tuple[float, int]] = []
    if not (isinstance(target_raw, (list, tuple)) and len(target_raw) >= 1):
        errors.append("scenario.target: expected a non-empty list of [position, lane] pairs")
    else:
        for j, pt in enumerate(target_raw):
            if not (isinstance(pt, (list, tuple)) and len(pt) == 2):
                errors.append(f"scenario.target[{j}]: expected [position, lane]")
                continue
            pos, ln = float(pt[0]), pt[1]
            if x_lo is not None and not (x_lo <= pos <= x_hi):
                errors.append(f"scenario.target[{j}]: position {pos} outside domain [{x_lo}, {x_hi}]")
            if not isinstance(ln, int) or (lanes is not None and not 1 <= ln <= lanes):
                errors.append(f"scenario.target[{j}]: lane {ln!r} outside 1..{lanes}")
            target.append((pos, ln))

    density = _parse_density(data.get("initial_density"), lanes, errors)

    drift = data.get("drift", "optimal-control")
    if drift not in DRIFT_MODES:
        errors.append(f"scenario.drift: {drift!r} not one of {list(DRIFT_MODES)}")

    solver_raw = data.get("solver", {})
    solver = None
    if _check_keys(solver_raw, ("max_outer_iters", "tol_policy", "tol_value", "damping", "mixing"),
                   "scenario.solver", errors):
        max_iters = solver_raw.get("max_outer_iters", 50)
        tol_policy = _number(solver_raw, "tol_policy", "scenario.solver", errors,
                             default=1e-3, required=False)
        default_tol_value = 1e-6 * (x_hi - x_lo) if x_lo is not None else None
        tol_value = _number(solver_raw, "tol_value", "scenario.solver", errors,
                            default=default_tol_value, required=False)
        damping = _number(solver_raw, "damping", "scenario.solver", errors,
                          default=0.5, required=False)
        mixing = solver_raw.get("mixing", "constant")
        try:
            solver = SolverOptions(max_outer_iters=max_iters, tol_policy=tol_policy,
                                   tol_value=tol_value, damping=damping, mixing=mixing)
        except (ValueError, TypeError) as exc:
            errors.append(f"scenario.solver: {exc}")

    snaps_raw = data.get("snapshot_times")
    snaps: tuple[float, ...] = ()
    if snaps_raw is None:
        if horizon is not None:
            snaps = (0.0, horizon / 2.0, horizon)
    elif not isinstance(snaps_raw, (list, tuple)):
        errors.append("scenario.snapshot_times: expected a list of times")
    else:
        snaps = tuple(float(t) for t in snaps_raw)
        for t in snaps:
            if horizon is not None and not 0.0 <= t <= horizon:
                errors.append(f"scenario.snapshot_times: {t} outside [0, {horizon}]")

    exchange = data.get("exchange")
    t_left = t_right = tuple(1.0 for _ in range(lanes or 0))
    if exchange is not None and _check_keys(exchange, ("t_left", "t_right"), "scenario.exchange", errors):
        for name in ("t_left", "t_right"):
            rates = exchange.get(name)
            if rates is None:
                continue
            if not (isinstance(rates, (list, tuple)) and (lanes is None or len(rates) == lanes)):
                errors.append(f"scenario.exchange.{name}: expected one rate per lane ({lanes})")
                continue
            vals = tuple(float(r) for r in rates)
            if any(r <= 0 for r in vals):
                errors.append(f"scenario.exchange.{name}: rates must be positive")
            if name == "t_left":
                t_left = vals
            else:
                t_right = vals

    if data.get("per_lane_flux") is not None:
        errors.append("scenario.per_lane_flux: reserved for future use; must be null")

    if errors:
        raise ScenarioError(errors)

    return Scenario(
        lanes=lanes,
        domain=(x_lo, x_hi),
        horizon=horizon,
        node_count=node_count,
        step_count=step_count,
        flux=FluxParams(a=a, b=b, rho_max=rho_max),
        cost=CostParams(kappa=kappa, epsilon=epsilon),
        control_levels=levels,
        target=tuple(target),
        initial_density=density,
        drift=drift,
        solver=solver,
        snapshot_times=snaps,
        exchange_t_left=t_left,
        exchange_t_right=t_right,
    )


def _parse_density(raw, lanes, errors) -> InitialDensity | None:
    path = "scenario.initial_density"
    if raw is None:
        errors.append(f"{path}: missing")
        return None
    if not _check_keys(raw, ("preset", "samples"), path, errors):
        return None
    has_preset = raw.get("preset") is not None
    has_samples = raw.get("samples") is not None
    if has_preset == has_samples:
        errors.append(f"{path}: give exactly one of 'preset' or 'samples'")
        return None
    if has_preset:
        name = raw["preset"]
        if name not in DENSITY_PRESETS:
            errors.append(f"{path}.preset: unknown preset {name!r}; available: {list(DENSITY_PRESETS)}")
            return None
        if name == "paper-sec6" and lanes is not None and lanes != 3:
            errors.append(f"{path}.preset: 'paper-sec6' requires 3 lanes, scenario has {lanes}")
        return InitialDensity(preset=name)
    tables = raw["samples"]
    if not (isinstance(tables, (list, tuple)) and (lanes is None or len(tables) == lanes)):
        errors.append(f"{path}.samples: expected one sample table per lane ({lanes})")
        return None
    parsed = []
    for li, table in enumerate(tables):
        rows = []
        ok = isinstance(table, (list, tuple)) and len(table) >= 1
        if ok:
            for row in table:
                if not (isinstance(row, (list, tuple)) and len(row) == 2):
                    ok = False
                    break
                rows.append((float(row[0]), float(row[1])))
        if not ok:
            errors.append(f"{path}.samples[{li}]: expected a list of [x, value] pairs")
            continue
        if any(y[0] <= x[0] for x, y in zip(rows, rows[1:])):
            errors.append(f"{path}.samples[{li}]: x coordinates must be strictly increasing")
        if any(v < 0 or not math.isfinite(v) for _, v in rows):
            errors.append(f"{path}.samples[{li}]: densities must be finite and nonnegative")
        parsed.append(tuple(rows))
    return InitialDensity(samples=tuple(parsed))


def scenario_to_dict(s: Scenario) -> dict:
    density: dict = {}
    if s.initial_density.preset is not None:
        density["preset"] = s.initial_density.preset
    else:
        density["samples"] = [[[x, v] for x, v in lane] for lane in s.initial_density.samples]
    return {
        "lanes": s.lanes,
        "domain": list(s.domain),
        "horizon": s.horizon,
        "node_count": s.node_count,
        "step_count": s.step_count,
        "flux": {"a": s.flux.a, "b": s.flux.b, "rho_max": s.flux.rho_max},
        "cost": {"kappa": s.cost.kappa, "epsilon": s.cost.epsilon},
        "control_levels": list(s.control_levels),
        "target": [[pos, lane] for pos, lane in s.target],
        "initial_density": density,
        "drift": s.drift,
        "solver": {
            "max_outer_iters": s.solver.max_outer_iters,
            "tol_policy": s.solver.tol_policy,
            "tol_value": s.solver.tol_value,
            "damping": s.solver.damping,
            "mixing": s.solver.mixing,
        },
        "snapshot_times": list(s.snapshot_times),
        "exchange": {"t_left": list(s.exchange_t_left), "t_right": list(s.exchange_t_right)},
    }


def parse_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError([f"{path}: not valid JSON ({exc})"]) from exc
    return scenario_from_dict(data)


def write_scenario(s: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2)
        fh.write("\n")


def density_functions(s: Scenario):
    """Per-lane vectorized density profiles rho_0^alpha(x)."""
    if s.initial_density.preset == "paper-sec6":
        return [lambda x, c=2.0 * (a + 1): np.exp(-((np.asarray(x) - c) ** 2)) / 2.0
                for a in range(3)]
    fns = []
    for table in s.initial_density.samples:
        xs = np.asarray([x for x, _ in table])
        vs = np.asarray([v for _, v in table])
        fns.append(lambda x, xs=xs, vs=vs: np.interp(np.asarray(x, dtype=float), xs, vs))
    return fns


def spatial_grid(s: Scenario) -> SpatialGrid:
    return build_uniform(s.domain[0], s.domain[1], s.node_count)


def time_grid(s: Scenario) -> TimeGrid:
    return TimeGrid(horizon=s.horizon, step_count=s.step_count)


def control_set(s: Scenario) -> ControlSet:
    return ControlSet(levels=s.control_levels)


def target_set(s: Scenario) -> TargetSet:
    return TargetSet(points=s.target)


def baseline_params(s: Scenario) -> BaselineParams:
    return BaselineParams(t_left=s.exchange_t_left, t_right=s.exchange_t_right)


def initial_field(s: Scenario, g: SpatialGrid) -> np.ndarray:
    """Cell-averaged initial densities, shape (lanes, M)."""
    return np.stack([project_initial(fn, g) for fn in density_functions(s)])

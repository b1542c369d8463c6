"""Receding-horizon closed-loop simulation of a hub network.

The plant advances in ``plant_step_min`` steps with realized profiles; the
controller re-plans every ``controller_period(grid)`` minutes and its
step-0 setpoints are held (zero-order hold) until the next re-plan.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from .controllers import (
    AdmmParams, DispatchPlan, MessageFabric, SolveOptions, shift_warm_start, solve_cmpc,
    solve_decmpc_network, solve_dmpc,
)
from .errors import ConfigError
from .hubmodel import (
    ChpParams, Forecast, GbParams, HpParams, HubSpec, HubState, Link, MchpParams, NetworkSpec, PvParams,
    StorageParams, StParams, TariffPath, evaluate_plant,
)
from .scenario import GridConfig, Profile, Scenario
from .timegrid import TimeGrid, controller_period

CONTROLLERS = ("dec", "cmpc", "dmpc")
ITER_SOFT_LIMIT = 60


@dataclass
class ControllerConfig:
    kind: str = "cmpc"
    grid: GridConfig = field(default_factory=GridConfig)
    relax_binaries: bool = False
    backend: str = "highs"
    rel_gap: float = 1e-6
    solve_seconds: float = math.inf
    admm: AdmmParams = field(default_factory=AdmmParams)
    warm_start: bool = True

    def validate(self):
        if self.kind not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {', '.join(CONTROLLERS)}, got {self.kind!r}")
        self.admm.validate()
        return self

    @property
    def options(self) -> SolveOptions:
        return SolveOptions(self.relax_binaries, self.backend, self.rel_gap, self.solve_seconds)

    def label(self) -> str:
        prefix = "MH-" if self.grid.kind == "mh" else ""
        name = {"dec": "DecMPC", "cmpc": "CMPC", "dmpc": "DMPC"}[self.kind]
        return prefix + name + ("-LP" if self.relax_binaries else "")


@dataclass
class SimulationRun:
    scenario: str
    controller: str
    grid: str
    t_sim_min: int
    plant_step_min: int
    period_min: int
    plant_log: list[dict]
    ctrl_log: list[dict]
    admm_trace: list[dict]
    totals: dict
    config: dict

    def hub_total(self, key: str, hub: str | None = None) -> float:
        return float(sum(r[key] for r in self.plant_log if hub is None or r["hub"] == hub))

    @property
    def total_cost(self) -> float:
        return self.totals["cost"]

    @property
    def iterations(self) -> np.ndarray:
        return np.array([r["iterations"] for r in self.ctrl_log], dtype=int)


# ------------------------------------------------------------------ forecasts

def forecast_slice(samples: np.ndarray, grid: TimeGrid, anchor_min: int, plant_step_min: int) -> np.ndarray:
    """Per grid step, the mean of the plant-resolution samples the step covers."""
    samples = np.asarray(samples, dtype=float)
    a = anchor_min // plant_step_min
    out = np.empty(grid.n_steps)
    for k, s in enumerate(grid.steps):
        lo = a + s.offset_min // plant_step_min
        hi = a + s.end_min // plant_step_min
        if hi > len(samples):
            raise ConfigError(f"profile too short: need sample {hi}, have {len(samples)}")
        out[k] = samples[lo:hi].mean()
    return out


def tariff_path(scenario: Scenario, grid: TimeGrid, anchor_min: int, c_in_samples=None) -> TariffPath:
    """Per-step tariffs sampled at each step start (peak window or override profile)."""
    starts = anchor_min + np.asarray(grid.offsets_min)
    tp = TariffPath.sample(scenario.network.tariffs, starts)
    if c_in_samples is not None:
        idx = starts // scenario.plant_step_min
        if idx[-1] >= len(c_in_samples):
            raise ConfigError(f"tariff profile too short: need sample {idx[-1]}, have {len(c_in_samples)}")
        tp.c_in = np.asarray(c_in_samples, dtype=float)[idx]
    return tp


def check_coverage(scenario: Scenario, grid: TimeGrid, t_sim_min: int) -> None:
    need = t_sim_min + grid.t_pred_min
    for hub in scenario.network.hubs:
        for sig, name in scenario.bindings[hub.id].items():
            span = scenario.profiles[name].span_min
            if span < need:
                raise ConfigError(f"profile {name!r} (hub {hub.id}, {sig}) covers {span} min; the run needs "
                                  f"{need} min (t_sim {t_sim_min} + t_pred {grid.t_pred_min})")
    if scenario.tariff_profile and scenario.profiles[scenario.tariff_profile].span_min < need:
        raise ConfigError(f"tariff profile {scenario.tariff_profile!r} is shorter than {need} min")


# ---------------------------------------------------------------- closed loop

def _storage_violation(hub: HubSpec, values: dict) -> float:
    worst = 0.0
    for key, sto in (("E_es", hub.es), ("E_ts", hub.ts)):
        if sto is None or key not in values:
            continue
        e = values[key]
        worst = max(worst, float(np.max(sto.e_min - e, initial=0.0)), float(np.max(e - sto.e_max, initial=0.0)))
    return worst


def _solve(cfg: ControllerConfig, net: NetworkSpec, grid, fcs, tp, states, warm, fabric):
    if cfg.kind == "dec":
        return solve_decmpc_network(net, grid, fcs, tp, states, cfg.options), None
    if cfg.kind == "cmpc":
        return solve_cmpc(net, grid, fcs, tp, states, cfg.options), None
    return solve_dmpc(net, grid, fcs, tp, states, cfg.admm, warm, cfg.options, fabric)


def run_closed_loop(scenario: Scenario, config: ControllerConfig, t_sim_min: int | None = None,
                    fabric: MessageFabric | None = None,
                    on_step: Callable[[int, DispatchPlan], None] | None = None) -> SimulationRun:
    """Simulate ``t_sim_min`` minutes (default: the scenario's) under ``config``."""
    config.validate()
    net = scenario.network
    plant = scenario.plant_step_min
    t_sim = scenario.t_sim_min if t_sim_min is None else t_sim_min
    grid = config.grid.build(plant)
    period = controller_period(grid)
    if t_sim % period:
        raise ConfigError(f"t_sim {t_sim} min is not a multiple of the controller period {period} min")
    check_coverage(scenario, grid, t_sim)

    prof = {h: {s: scenario.hub_profile(h, s) for s in ("electric", "heat", "irradiance")} for h in net.hub_ids}
    c_in = scenario.profiles[scenario.tariff_profile].resample(plant) if scenario.tariff_profile else None
    states = {h.id: HubState.initial(h) for h in net.hubs}
    plant_log, ctrl_log, trace = [], [], []
    warm = None
    sub = period // plant

    for t in range(0, t_sim, period):
        fcs = {h: Forecast(*(forecast_slice(prof[h][s], grid, t, plant) for s in ("electric", "heat", "irradiance")))
               for h in net.hub_ids}
        tp = tariff_path(scenario, grid, t, c_in)
        if fabric is not None:
            fabric.begin_session(t)
        plan, admm = _solve(config, net, grid, fcs, tp, states, warm if config.warm_start else None, fabric)
        if admm is not None:
            warm = shift_warm_start(admm, grid)
            trace.extend({"t_min": t, "round": i + 1, "primal": r, "dual": s}
                         for i, (r, s) in enumerate(admm.history))
        ctrl_log.append({
            "t_min": t, "objective": plan.objective, "planned_step_cost": plan.planned_cost(0),
            "iterations": plan.iterations, "primal_residual": plan.primal_residual,
            "dual_residual": plan.dual_residual, "converged": bool(plan.converged),
            "n_variables": plan.n_variables, "status": plan.status, "wall_time": plan.wall_time,
            "max_cyclic_trade": plan.max_cyclic_trade(),
            "plan_balance_residual": max(hp.balance_residual for hp in plan.hubs.values()),
            "plan_storage_violation": max(_storage_violation(net.hub(h), hp.values) for h, hp in plan.hubs.items()),
        })
        if on_step is not None:
            on_step(t, plan)
        sp = {h: plan.setpoints(h, 0) for h in net.hub_ids}
        tr = {h: plan.trade_inputs(h, net, 0) for h in net.hub_ids}
        for j in range(sub):
            tt = t + j * plant
            i = tt // plant
            ptp = TariffPath.sample(net.tariffs, [tt])
            if c_in is not None:
                ptp.c_in = c_in[i:i + 1].astype(float)
            for hub in net.hubs:
                realized = {s: float(prof[hub.id][s][i]) for s in ("electric", "heat", "irradiance")}
                rec = evaluate_plant(hub, sp[hub.id], realized, plant / 60.0, states[hub.id], ptp, tr[hub.id])
                states[hub.id] = rec.state
                plant_log.append({
                    "t_min": tt, "hub": hub.id, "cost": rec.cost, "p_in": rec.p_in, "p_out": rec.p_out,
                    "gas": rec.gas, "import_e": rec.import_e_sent, "export_e": rec.export_e,
                    "import_h": rec.import_h_sent, "export_h": rec.export_h,
                    "heat_surplus": rec.heat_surplus, "heat_deficit": rec.heat_deficit,
                    "e_es": rec.e_es, "e_ts": rec.e_ts, "load_e": rec.load_e, "load_h": rec.load_h,
                    "electric_residual": rec.electric_residual,
                    "storage_violation": _realized_storage_violation(hub, rec),
                })

    dt = plant / 60.0
    totals = {
        "cost": float(sum(r["cost"] for r in plant_log)),
        "grid_import_kwh": dt * sum(r["p_in"] for r in plant_log),
        "grid_export_kwh": dt * sum(r["p_out"] for r in plant_log),
        "gas_kwh": dt * sum(r["gas"] for r in plant_log),
        "trade_e_kwh": dt * sum(r["export_e"] for r in plant_log),
        "trade_h_kwh": dt * sum(r["export_h"] for r in plant_log),
        "heat_surplus_kwh": dt * sum(r["heat_surplus"] for r in plant_log),
        "heat_deficit_kwh": dt * sum(r["heat_deficit"] for r in plant_log),
        "max_electric_residual": max(abs(r["electric_residual"]) for r in plant_log),
        "max_storage_violation": max(max(r["storage_violation"] for r in plant_log),
                                     max(c["plan_storage_violation"] for c in ctrl_log)),
        "max_plan_balance_residual": max(c["plan_balance_residual"] for c in ctrl_log),
        "solve_time_s": float(sum(c["wall_time"] for c in ctrl_log)),
        "n_plant_steps": t_sim // plant,
        "n_controller_steps": len(ctrl_log),
        "planned_objective_sum": float(sum(c["objective"] for c in ctrl_log)),
    }
    if config.kind == "dmpc":
        its = np.array([c["iterations"] for c in ctrl_log])
        totals.update({
            "admm_iterations_mean": float(its.mean()), "admm_iterations_max": int(its.max()),
            "admm_converged_fraction": float(np.mean([c["converged"] for c in ctrl_log])),
            "admm_fraction_below_60": float(np.mean(its < ITER_SOFT_LIMIT)),
        })
    cfg = {"controller": config.kind, "grid": config.grid.label(), "relax_binaries": config.relax_binaries,
           "backend": config.backend, "rel_gap": config.rel_gap, "warm_start": config.warm_start,
           "admm": asdict(config.admm), "seed": scenario.seed, "t_sim_min": t_sim}
    return SimulationRun(scenario.name, config.label(), config.grid.label(), t_sim, plant, period,
                         plant_log, ctrl_log, trace, totals, cfg)


def _realized_storage_violation(hub: HubSpec, rec) -> float:
    worst = 0.0
    for e, sto in ((rec.e_es, hub.es), (rec.e_ts, hub.ts)):
        if sto is not None:
            worst = max(worst, sto.e_min - e, e - sto.e_max)
    return worst


# -------------------------------------------------------------------- reports

def optimality_gap(cost: float, reference: float) -> float:
    return (cost - reference) / abs(reference)


def compare_runs(runs: Sequence[SimulationRun], reference: int = 0) -> list[dict]:
    """Cost/time/gap table; gaps are relative to ``runs[reference]``."""
    if not runs:
        return []
    ref = runs[reference]
    for r in runs:
        if (r.scenario, r.t_sim_min, r.plant_step_min) != (ref.scenario, ref.t_sim_min, ref.plant_step_min):
            raise ConfigError(f"run {r.controller} ({r.scenario}, {r.t_sim_min} min) does not share the "
                              f"scenario of the reference run ({ref.scenario}, {ref.t_sim_min} min)")
    rows = []
    for r in runs:
        its = r.iterations
        rows.append({
            "controller": r.controller, "grid": r.grid, "total_cost": r.total_cost,
            "solve_time_s": r.totals["solve_time_s"], "gap": optimality_gap(r.total_cost, ref.total_cost),
            "iterations_mean": float(its.mean()) if its.size else 0.0,
            "iterations_max": int(its.max()) if its.size else 0,
            "heat_deficit_kwh": r.totals["heat_deficit_kwh"],
        })
    return rows


# ------------------------------------------------------------ network scaling

def _jitter_device(dev, f: float):
    if dev is None:
        return None
    if isinstance(dev, (PvParams, StParams)):
        return replace(dev, area=dev.area * f, p_max=dev.p_max * f)
    if isinstance(dev, (HpParams, GbParams)):
        return replace(dev, q_max=dev.q_max * f)
    if isinstance(dev, ChpParams):
        return replace(dev, p_vertices=tuple(v * f for v in dev.p_vertices),
                       q_vertices=tuple(v * f for v in dev.q_vertices),
                       ramp_up=dev.ramp_up * f, ramp_down=dev.ramp_down * f)
    if isinstance(dev, MchpParams):
        return replace(dev, p_max=dev.p_max * f)
    if isinstance(dev, StorageParams):
        return replace(dev, e_min=dev.e_min * f, e_max=dev.e_max * f, p_max=dev.p_max * f,
                       e0=None if dev.e0 is None else dev.e0 * f)
    raise TypeError(type(dev))


def scale_network(base: Scenario, target: int, seed: int = 0) -> Scenario:
    """Grow ``base`` to ``target`` hubs by cyclic replication of its hubs.

    Copies get seeded +-10 % jitter on device capacities and demand
    profiles (irradiance is shared); the network is fully connected with the
    base network's first link parameters.
    """
    n0 = len(base.network.hubs)
    if target < n0:
        raise ConfigError(f"target hub count {target} is below the base count {n0}")
    if target == n0:
        return base
    rng = np.random.default_rng([seed, target])
    link = next(iter(base.network.links.values()), Link(250.0, 200.0))
    hubs = list(base.network.hubs)
    profiles = dict(base.profiles)
    bindings = {h: dict(b) for h, b in base.bindings.items()}
    for k in range(n0, target):
        tpl = base.network.hubs[k % n0]
        hid = f"{tpl.id}_{k // n0}"
        f_cap = rng.uniform(0.9, 1.1)
        hubs.append(HubSpec(hid, **{d: _jitter_device(getattr(tpl, d), f_cap) for d in HubSpec.DEVICES}))
        b = dict(base.bindings[tpl.id])
        for sig in ("electric", "heat"):
            src = profiles[b[sig]]
            f = rng.uniform(0.9, 1.1)
            name = f"{hid}_{sig}"
            profiles[name] = Profile(name, src.kind, src.period_min, src.values * f)
            b[sig] = name
        bindings[hid] = b
    ids = [h.id for h in hubs]
    links = {(ids[i], ids[j]): link for i in range(target) for j in range(i + 1, target)}
    net = NetworkSpec(tuple(hubs), links, base.network.tariffs, base.network.heat_slack_penalty)
    return replace(base, network=net, profiles=profiles, bindings=bindings, name=f"{base.name}_x{target}",
                   sources={})


# -------------------------------------------------------------------- writers

def _write_rows(path: Path, rows: list[dict], columns: Sequence[str]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


PLANT_COLUMNS = ("t_min", "hub", "cost", "p_in", "p_out", "gas", "import_e", "export_e", "import_h", "export_h",
                 "heat_surplus", "heat_deficit", "e_es", "e_ts", "load_e", "load_h", "electric_residual")
CTRL_COLUMNS = ("t_min", "objective", "planned_step_cost", "iterations", "primal_residual", "dual_residual",
                "converged", "n_variables", "status", "max_cyclic_trade")
TRACE_COLUMNS = ("t_min", "round", "primal", "dual")


def write_run(run: SimulationRun, out_dir) -> Path:
    """plant_log.csv, controller_log.csv, admm_residuals.csv (DMPC), timing.csv and summary.yaml.

    All files except timing.csv and the ``timing`` block of the summary are
    reproducible byte for byte for a fixed seed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "plant_log.csv", run.plant_log, PLANT_COLUMNS)
    _write_rows(out / "controller_log.csv", run.ctrl_log, CTRL_COLUMNS)
    if run.admm_trace:
        _write_rows(out / "admm_residuals.csv", run.admm_trace, TRACE_COLUMNS)
    _write_rows(out / "timing.csv", run.ctrl_log, ("t_min", "wall_time"))
    totals = {k: v for k, v in run.totals.items() if k != "solve_time_s"}
    summary = {"scenario": run.scenario, "controller": run.controller, "grid": run.grid,
               "config": run.config, "totals": _plain(totals),
               "timing": {"solve_time_s": run.totals["solve_time_s"]}}
    (out / "summary.yaml").write_text(yaml.safe_dump(summary, sort_keys=False))
    return out


def _plain(d):
    return json.loads(json.dumps(d, default=float))


def write_table(rows: list[dict], path, columns: Sequence[str] | None = None) -> None:
    columns = list(columns or (rows[0].keys() if rows else []))
    _write_rows(Path(path), rows, columns)

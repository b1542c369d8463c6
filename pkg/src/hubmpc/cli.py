"""Command-line front end: ``hubmpc run | sweep | scale``.

Outputs are data only (CSV + YAML summaries). Exit codes: 0 ok, 2 bad
configuration, 3 solver/protocol failure, 4 I/O error. Set ``HUBMPC_LOG``
(DEBUG, INFO, WARNING, ...) for log verbosity.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .controllers import AdmmParams
from .errors import ConfigError, ProtocolError, SolverError
from .scenario import GridConfig, Scenario, benchmark_path, load_scenario, with_synthetic_days
from .simloop import (
    CONTROLLERS, ControllerConfig, optimality_gap, run_closed_loop, scale_network, write_run, write_table,
)

log = logging.getLogger("hubmpc")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

SWEEP_COLUMNS = ("controller", "t_res_min", "t_pred_min", "grid", "status", "total_cost", "solve_time_s", "gap",
                 "iterations_mean", "heat_deficit_kwh", "error")
SCALE_COLUMNS = ("hubs", "controller", "grid", "status", "total_cost", "solve_time_s", "gap", "iterations_mean",
                 "iterations_max", "error")
HIST_COLUMNS = ("controller", "iterations", "count")
DEFAULT_T_RES = (15, 30, 60)
DEFAULT_T_PRED = (720, 1440, 2160, 2880, 4320)
MH_CELLS = ((2880, "mh_48h"), (4320, "mh_72h"))


# ------------------------------------------------------------------ helpers

def _csv_list(text: str, conv=str) -> list:
    return [conv(t) for t in text.split(",") if t.strip()]


def _duration(text: str) -> int:
    t = text.strip().lower()
    if t.endswith("d") and t[:-1].isdigit():
        return int(t[:-1]) * 1440
    return GridConfig.parse(f"uniform:{t}:1").t_pred_min


def _load(args) -> Scenario:
    sc = load_scenario(args.scenario or benchmark_path())
    if args.seed is not None:
        sc = with_synthetic_days(sc, _synthetic_days(sc), args.seed)
    return sc


def _synthetic_days(sc: Scenario) -> int:
    return int(sc.sources.get("synthetic", {}).get("days", 0)) or math.ceil(
        min(p.span_min for p in sc.profiles.values()) / 1440)


def _covered(sc: Scenario, t_sim_min: int, t_pred_min: int) -> Scenario:
    """Extend synthetic profiles when the run would read past their end."""
    need = math.ceil((t_sim_min + t_pred_min) / 1440)
    if sc.sources.get("profiles") and _synthetic_days(sc) < need:
        log.info("extending synthetic profiles to %d days", need)
        return with_synthetic_days(sc, need)
    return sc


def _controller(args, kind: str, grid: GridConfig) -> ControllerConfig:
    admm = AdmmParams(rho=args.rho, eps=args.eps, h_max=args.hmax, max_seconds=args.time_cap)
    return ControllerConfig(kind=kind, grid=grid, relax_binaries=args.relax, admm=admm,
                            rel_gap=args.rel_gap).validate()


def _t_sim(args, sc: Scenario) -> int:
    return sc.t_sim_min if args.t_sim is None else _duration(args.t_sim)


def _run_cell(sc: Scenario, cfg: ControllerConfig, t_sim: int):
    grid = cfg.grid.build(sc.plant_step_min)
    sc = _covered(sc, t_sim, grid.t_pred_min)
    return run_closed_loop(sc, cfg, t_sim)


# ---------------------------------------------------------------- commands

def cmd_run(args) -> int:
    sc = _load(args)
    grid = GridConfig.parse(args.grid) if args.grid else sc.grid
    cfg = _controller(args, args.controller, grid)
    run = _run_cell(sc, cfg, _t_sim(args, sc))
    out = write_run(run, args.out)
    print(f"{run.controller} {run.grid}: cost {run.total_cost:.2f} CHF, "
          f"solve time {run.totals['solve_time_s']:.1f} s -> {out}")
    return EXIT_OK


def _sweep_cell(job):
    sc, cfg, t_sim, key = job
    try:
        run = _run_cell(sc, cfg, t_sim)
    except (ConfigError, SolverError, ProtocolError) as exc:
        return key, None, f"{type(exc).__name__}: {exc}"
    return key, run, ""


def _map(fn, jobs, n_jobs: int):
    if n_jobs <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(n_jobs) as pool:
        return list(pool.map(fn, jobs))


def cmd_sweep(args) -> int:
    kinds = _csv_list(args.controllers)
    if not kinds:
        raise ConfigError("empty controller set")
    t_res = _csv_list(args.t_res, _duration)
    t_pred = _csv_list(args.t_pred, _duration)
    sc = _load(args)
    t_sim = _t_sim(args, sc)
    jobs = []
    for kind in kinds:
        for res in t_res:
            for pred in t_pred:
                grid = GridConfig("uniform", pred, res)
                grid.build(sc.plant_step_min)
                jobs.append((sc, _controller(args, kind, grid), t_sim, (kind, res, pred)))
    if args.mh:
        for kind in ("cmpc", "dmpc"):
            for pred, name in MH_CELLS:
                jobs.append((sc, _controller(args, kind, GridConfig("mh", schedule=name)), t_sim,
                             (kind, None, pred)))

    results = _map(_sweep_cell, jobs, args.jobs)
    ref = {(k[1], k[2]): run.total_cost for k, run, _ in results if run is not None and k[0] == "cmpc"}
    fine = {k[2]: run.total_cost for k, run, _ in results
            if run is not None and k[0] == "cmpc" and k[1] == min(t_res)}
    rows = []
    for (kind, res, pred), run, err in results:
        base = ref.get((res, pred)) if res is not None else fine.get(pred)
        row = {"controller": kind if res is not None else f"mh-{kind}", "t_res_min": res if res else "",
               "t_pred_min": pred, "status": "ok" if run else "failed", "error": err}
        if run is not None:
            its = run.iterations
            row.update(grid=run.grid, total_cost=run.total_cost, solve_time_s=run.totals["solve_time_s"],
                       gap=optimality_gap(run.total_cost, base) if base else None,
                       iterations_mean=float(its.mean()) if its.size else 0.0,
                       heat_deficit_kwh=run.totals["heat_deficit_kwh"])
            if args.keep_runs:
                write_run(run, Path(args.out) / "runs" / f"{row['controller']}_{res}_{pred}")
        rows.append(row)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table(rows, out / "sweep.csv", SWEEP_COLUMNS)
    failed = sum(r["status"] == "failed" for r in rows)
    print(f"sweep: {len(rows)} rows, {failed} failed -> {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_scale(args) -> int:
    counts = _csv_list(args.counts, int)
    if not counts:
        raise ConfigError("empty hub-count set")
    bad = [c for c in counts if c < 3]
    if bad:
        raise ConfigError(f"hub counts must be >= 3, got {bad}")
    base = _load(args)
    t_sim = _t_sim(args, base) if args.t_sim else 7 * 1440
    uni = GridConfig.parse(args.grid) if args.grid else base.grid
    mh = GridConfig("mh", schedule=args.mh_schedule)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in counts:
        sc = scale_network(base, n, seed=base.seed)
        jobs = [(sc, _controller(args, kind, grid), t_sim, (n, kind, grid.kind))
                for grid in (mh, uni) for kind in ("cmpc", "dmpc")]
        results = _map(_sweep_cell, jobs, args.jobs)
        runs = {k: run for k, run, _ in results}
        hist = []
        for (hubs, kind, gk), run, err in results:
            row = {"hubs": hubs, "controller": ("MH-" if gk == "mh" else "") + kind.upper(),
                   "status": "ok" if run else "failed", "error": err}
            ref = runs.get((hubs, "cmpc", gk))
            if run is not None:
                its = run.iterations
                row.update(controller=run.controller, grid=run.grid, total_cost=run.total_cost,
                           solve_time_s=run.totals["solve_time_s"],
                           gap=optimality_gap(run.total_cost, ref.total_cost) if ref else None,
                           iterations_mean=float(its.mean()) if its.size else 0.0,
                           iterations_max=int(its.max()) if its.size else 0)
                if kind == "dmpc":
                    hist += [{"controller": run.controller, "iterations": i, "count": c}
                             for i, c in sorted(Counter(int(v) for v in its).items())]
            rows.append(row)
        write_table(hist, out / f"admm_iterations_{n}.csv", HIST_COLUMNS)
    write_table(rows, out / "scale.csv", SCALE_COLUMNS)
    print(f"scale: {len(rows)} runs over {len(counts)} network sizes -> {out / 'scale.csv'}")
    return EXIT_OK


# ------------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser):
    p.add_argument("--scenario", help="scenario YAML (default: bundled three-hub benchmark)")
    p.add_argument("--grid", help="uniform:<pred>:<res> (e.g. uniform:24h:60) or mh:<schedule-name>")
    p.add_argument("--rho", type=float, default=0.1, help="ADMM penalty")
    p.add_argument("--eps", type=float, default=1e-3, help="ADMM residual tolerance")
    p.add_argument("--hmax", type=int, default=150, help="ADMM iteration cap per control step")
    p.add_argument("--time-cap", type=float, default=600.0, help="ADMM wall-time cap per control step [s]")
    p.add_argument("--seed", type=int, help="regenerate synthetic profiles with this seed")
    p.add_argument("--t-sim", help="simulated time: minutes or with an h/d suffix (e.g. 3d)")
    p.add_argument("--relax", action="store_true", help="LP-relax the binaries (CHP and boiler commitment)")
    p.add_argument("--rel-gap", type=float, default=1e-6, help="MIP relative gap")
    p.add_argument("--out", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hubmpc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="one closed-loop simulation")
    _common(p)
    p.add_argument("--controller", choices=CONTROLLERS, default="cmpc")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="controllers x resolutions x horizons")
    _common(p)
    p.add_argument("--controllers", default=",".join(CONTROLLERS), help="comma list of dec,cmpc,dmpc")
    p.add_argument("--t-res", default=",".join(map(str, DEFAULT_T_RES)), help="comma list of resolutions")
    p.add_argument("--t-pred", default=",".join(f"{m // 60}h" for m in DEFAULT_T_PRED),
                   help="comma list of prediction horizons")
    p.add_argument("--mh", action="store_true", help="add the multi-horizon CMPC/DMPC cells (48 h and 72 h)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--keep-runs", action="store_true", help="also write per-cell logs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scale", help="network-size study (CMPC/DMPC, uniform and multi-horizon)")
    _common(p)
    p.add_argument("--counts", default="3,9,12,18", help="comma list of hub counts (each >= 3)")
    p.add_argument("--mh-schedule", default="mh_72h", help="named multi-horizon schedule")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_scale)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HUBMPC_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"hubmpc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, ProtocolError) as exc:
        print(f"hubmpc: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"hubmpc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

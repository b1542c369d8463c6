import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hubmpc.controllers import SolveOptions, solve_cmpc, solve_decmpc
from hubmpc.errors import ConfigError
from hubmpc.hubmodel import (
    ChpParams, Forecast, HpParams, HubSpec, HubState, Link, NetworkSpec, PvParams, StorageParams, TariffPath,
    Tariffs, build_coupling_constraints, build_hub_constraints, evaluate_plant, hub_stage_cost, stage_cost,
)
from hubmpc.milp import ProblemBuilder, solve_lp
from hubmpc.scenario import load_benchmark
from hubmpc.timegrid import build_uniform

BENCH = load_benchmark()
NET = BENCH.network
GRID1 = build_uniform(60, 60, 15)


def zeros(n):
    return Forecast(np.zeros(n), np.zeros(n), np.zeros(n))


def test_hub3_single_step_structure():
    b = ProblemBuilder()
    hv = build_hub_constraints(b, NET.hub("hub3"), GRID1, zeros(1))
    p = b.build()
    # P_pv, P_hp, Q_hp, P_in, P_out, heat surplus, heat deficit
    assert p.n_vars == 7
    assert sorted(hv.idx) == sorted(["P_pv", "P_hp", "Q_hp", "P_in", "P_out", "heat_surplus", "heat_deficit"])
    # PV equality, HP coupling, electric and heat balances
    assert p.n_rows == 4
    assert p.n_binaries == 0


def test_zero_dispatch_is_feasible_at_zero_cost():
    grid = build_uniform(360, 60, 15)
    tp = TariffPath.sample(NET.tariffs, grid.offsets_min)
    dt = np.array(grid.durations_h)
    for hub in NET.hubs:
        b = ProblemBuilder()
        hv = build_hub_constraints(b, hub, grid, zeros(grid.n_steps))
        hub_stage_cost(b, hv, tp, grid, 10.0, coupled=False)
        p = b.build()
        x = np.zeros(p.n_vars)
        # storage simply decays from its initial level
        for key, sto in (("E_es", hub.es), ("E_ts", hub.ts)):
            if sto is not None:
                x[hv.idx[key]] = sto.initial * sto.gamma ** np.cumsum(dt)
        # the boiler needs no active segment and the CHP is off at zero output
        assert p.max_violation(x) <= 1e-9, hub.id
        assert p.objective(x) == pytest.approx(0.0, abs=1e-12)


def test_chp_vertex_a():
    b = ProblemBuilder()
    hv = build_hub_constraints(b, HubSpec("c", chp=NET.hub("hub1").chp), GRID1, zeros(1))
    for name, val in (("w_chpA", 1.0), ("w_chpB", 0.0), ("w_chpC", 0.0), ("w_chpD", 0.0), ("b_chp", 1.0)):
        b.set_bounds(hv.idx[name], lb=val, ub=val)
    vals = hv.values(solve_lp(b.build()).x)
    assert vals["P_chp"][0] == pytest.approx(380.0)
    assert vals["Q_chp"][0] == pytest.approx(0.0, abs=1e-9)
    assert vals["F_chp"][0] == pytest.approx(380.0 / 0.364, abs=1e-6)
    assert vals["F_chp"][0] == pytest.approx(1043.96, abs=0.01)


def test_coupling_bounds_and_count():
    grid = build_uniform(1440, 60, 15)
    b = ProblemBuilder()
    pv = build_coupling_constraints(b, NET, grid)
    p = b.build()
    assert len(pv) == 3
    assert p.n_vars == 3 * 4 * grid.n_steps
    for v in pv.values():
        assert np.all(p.ub[v.p_ab] == 250.0) and np.all(p.ub[v.q_ba] == 200.0)
        assert np.all(p.lb[v.stacked()] == 0.0)


def test_zero_heat_limit_pins_heat_trades():
    net = NET.with_links(kappa_h=0.0)
    b = ProblemBuilder()
    pv = build_coupling_constraints(b, net, GRID1)
    p = b.build()
    for v in pv.values():
        assert np.all(p.ub[v.q_ab] == 0.0) and np.all(p.ub[v.q_ba] == 0.0)
        assert np.all(p.ub[v.p_ab] == 250.0)


def test_stage_cost_examples():
    peak = TariffPath.sample(Tariffs(), [8 * 60])
    assert float(stage_cost(10.0, 0.0, 0.0, 0.0, 0.0, peak, 1.0)[0]) == pytest.approx(2.70)
    assert float(stage_cost(0.0, 10.0, 0.0, 0.0, 0.0, peak, 1.0)[0]) == pytest.approx(-1.20)
    assert float(stage_cost(0.0, 0.0, 0.0, 0.0, 0.0, peak, 1.0)[0]) == 0.0
    off = TariffPath.sample(Tariffs(), [22 * 60])
    assert float(stage_cost(10.0, 0.0, 0.0, 0.0, 0.0, off, 1.0)[0]) == pytest.approx(2.20)


def _plant(hub, sp, realized, state=None, dt=1.0, trades=()):
    tp = TariffPath.sample(NET.tariffs, [0])
    return evaluate_plant(hub, sp, realized, dt, state or HubState.initial(hub), tp, list(trades))


def test_plant_electric_mismatch_goes_to_grid():
    hub = NET.hub("hub3")
    sp = {"P_hp": 10.0, "Q_hp": 45.0}
    base = _plant(hub, sp, {"electric": 40.0, "heat": 45.0, "irradiance": 0.0})
    more = _plant(hub, sp, {"electric": 45.0, "heat": 45.0, "irradiance": 0.0})
    assert more.p_in - base.p_in == pytest.approx(5.0)
    assert abs(more.electric_residual) <= 1e-9


def test_plant_heat_surplus():
    hub = NET.hub("hub3")
    rec = _plant(hub, {"P_hp": 10.0, "Q_hp": 45.0}, {"electric": 0.0, "heat": 42.0, "irradiance": 0.0})
    assert rec.heat_surplus == pytest.approx(3.0) and rec.heat_deficit == 0.0


def test_battery_step():
    es = StorageParams(gamma=0.999, eta=0.99, e_min=0.0, e_max=1000.0, p_max=200.0, e0=500.0)
    hub = HubSpec("b", es=es)
    rec = _plant(hub, {"P_ch": 100.0}, {"electric": 0.0, "heat": 0.0, "irradiance": 0.0})
    assert rec.e_es == pytest.approx(598.5)
    assert rec.p_in == pytest.approx(100.0)


def test_plant_saturates_storage():
    es = StorageParams(gamma=1.0, eta=1.0, e_min=0.0, e_max=100.0, p_max=200.0, e0=90.0)
    rec = _plant(HubSpec("b", es=es), {"P_ch": 50.0}, {"electric": 0.0, "heat": 0.0, "irradiance": 0.0})
    assert rec.e_es == pytest.approx(100.0)
    assert rec.charge_e == pytest.approx(10.0)
    assert abs(rec.electric_residual) <= 1e-9


def test_plant_trades_with_losses():
    hub = HubSpec("t")
    rec = _plant(hub, {}, {"electric": 100.0, "heat": 0.0, "irradiance": 0.0},
                 trades=[(0.0, 50.0, 0.98, 0.0, 0.0, 0.95)])
    assert rec.import_e == pytest.approx(49.0) and rec.p_in == pytest.approx(51.0)
    assert rec.cost == pytest.approx(51.0 * 0.22 + 50.0 * 0.02)


def test_forecast_validation():
    b = ProblemBuilder()
    with pytest.raises(ConfigError):
        build_hub_constraints(b, NET.hub("hub3"), GRID1, zeros(2))
    with pytest.raises(ConfigError):
        build_hub_constraints(b, NET.hub("hub3"), GRID1, Forecast([np.nan], [0.0], [0.0]))


def test_parameter_validation():
    errs = []
    NetworkSpec((HubSpec("a", pv=PvParams(1.5, 10.0)), HubSpec("a")), {}).validate(errs)
    assert any("eta" in e for e in errs) and any("unique" in e for e in errs)
    with pytest.raises(ConfigError):
        StorageParams(1.0, 1.0, 10.0, 5.0, 1.0).validate()


def _random_forecast(rng, n, scale):
    return Forecast(rng.uniform(0, scale[0], n), rng.uniform(0, scale[1], n), rng.uniform(0, 0.8, n))


SCALES = {"hub1": (1500, 1500), "hub2": (300, 250), "hub3": (80, 40)}


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["hub1", "hub2", "hub3"]))
def test_dispatch_invariants(seed, hub_id):
    rng = np.random.default_rng(seed)
    hub = NET.hub(hub_id)
    grid = build_uniform(720, 60, 15)
    tp = TariffPath.sample(NET.tariffs, grid.offsets_min)
    plan = solve_decmpc(hub, grid, _random_forecast(rng, grid.n_steps, SCALES[hub_id]), tp)
    v = plan.hubs[hub_id].values
    assert plan.hubs[hub_id].balance_residual <= 1e-6
    for key, sto in (("E_es", hub.es), ("E_ts", hub.ts)):
        if sto is not None:
            assert np.all(v[key] >= sto.e_min - 1e-6) and np.all(v[key] <= sto.e_max + 1e-6)
    if hub.chp is not None:
        off = v["b_chp"] < 0.5
        assert np.all(np.abs(v["P_chp"][off]) <= 1e-6) and np.all(np.abs(v["Q_chp"][off]) <= 1e-6)
    if hub.gb is not None:
        z = np.vstack([v[f"z_gb{s}"] for s in range(1, 5)])
        assert np.all(z.sum(0) <= 1 + 1e-6)
        assert np.all(v["Q_gb"] <= max(hub.gb.eta_segments) * v["F_gb"] + 1e-6)


@settings(max_examples=4, deadline=None)
@given(st.integers(0, 10_000))
def test_no_cyclic_trades(seed):
    rng = np.random.default_rng(seed)
    grid = build_uniform(360, 60, 15)
    tp = TariffPath.sample(NET.tariffs, grid.offsets_min)
    fcs = {h: _random_forecast(rng, grid.n_steps, SCALES[h]) for h in NET.hub_ids}
    plan = solve_cmpc(NET, grid, fcs, tp, options=SolveOptions(relax_binaries=True))
    assert plan.max_cyclic_trade() <= 1e-6


def test_min_up_time_respected():
    chp = ChpParams(0.364, (380.0, 315.0, 745.0, 800.0), (0.0, 515.0, 1220.0, 0.0), min_up_h=4.0, min_down_h=2.0)
    hub = HubSpec("c", chp=chp, hp=HpParams(4.5, 0.0, 50.0))
    grid = build_uniform(720, 60, 15)
    n = grid.n_steps
    # CHP is attractive only in the first hour: it must then stay on for 4 h
    elec = np.zeros(n)
    elec[0] = 800.0
    tp = TariffPath.sample(Tariffs(c_in_peak=0.5, c_in_offpeak=0.5, c_gas=0.05), grid.offsets_min)
    plan = solve_decmpc(hub, grid, Forecast(elec, np.zeros(n), np.zeros(n)), tp)
    b = np.round(plan.hubs["c"].values["b_chp"])
    assert b[0] == 1
    runs = np.diff(np.r_[0, b, 0])
    starts, ends = np.flatnonzero(runs == 1), np.flatnonzero(runs == -1)
    assert all(e - s >= 4 or e == n for s, e in zip(starts, ends))


def test_pv_clipped_to_rating():
    pv = PvParams(0.15, 8400.0, 0.0, 500.0)
    assert float(pv.available(0.8)) == 500.0
    assert math.isclose(float(PvParams(0.15, 8400.0).available(0.8)), 1008.0)


def test_link_defaults():
    assert not Link().connected and Link(1.0).connected

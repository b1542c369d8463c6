import copy
from datetime import datetime, timedelta

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from hubmpc.errors import ConfigError
from hubmpc.hubmodel import PvParams
from hubmpc.scenario import (
    I_PEAK, GridConfig, Profile, benchmark_path, ingest_csv_profile, load_benchmark, load_scenario,
    scenario_from_dict, synth_profiles, synth_weather, with_synthetic_days, write_csv_profile, write_scenario,
)

DOC = yaml.safe_load(benchmark_path().read_text())


def doc():
    return copy.deepcopy(DOC)


def test_benchmark_golden_values():
    sc = load_benchmark()
    net = sc.network
    assert net.hub_ids == ["hub1", "hub2", "hub3"]
    assert len(net.pairs) == 3
    for link in net.links.values():
        assert (link.kappa_e, link.kappa_h) == (250.0, 200.0)
    t = net.tariffs
    assert (t.c_in_peak, t.c_in_offpeak, t.c_out, t.c_gas, t.c_tr) == (0.27, 0.22, 0.12, 0.115, 0.02)

    h1, h2, h3 = net.hubs
    assert (h1.pv.eta, h1.pv.area) == (0.15, 8400.0)
    assert (h1.st.eta, h1.st.area, h1.st.alpha_p, h1.st.alpha_q) == (0.15, 8400.0, 0.38, 0.62)
    assert h1.chp.eta == 0.364
    assert h1.chp.p_vertices == (380.0, 315.0, 745.0, 800.0)
    assert h1.chp.q_vertices == (0.0, 515.0, 1220.0, 0.0)
    assert (h1.chp.ramp_up, h1.chp.min_up_h, h1.chp.min_down_h) == (400.0, 16.0, 4.0)
    assert (h1.mchp.eta, h1.mchp.alpha_p, h1.mchp.alpha_q, h1.mchp.p_max) == (0.35, 0.38, 0.62, 240.0)
    assert (h1.hp.cop, h1.hp.q_max) == (4.5, 350.0)
    assert h1.gb.eta_segments == (0.59, 0.83, 0.9, 0.82) and h1.gb.q_max == 350.0
    assert (h1.es.eta, h1.es.gamma, h1.es.e_min, h1.es.e_max, h1.es.p_max) == (0.99, 0.999, 150.0, 750.0, 200.0)
    assert (h1.ts.eta, h1.ts.gamma, h1.ts.e_min, h1.ts.e_max, h1.ts.p_max) == (0.95, 0.992, 300.0, 12900.0, 3200.0)
    assert (h2.pv.area, h2.pv.p_max, h2.gb.q_max, h2.hp.q_max) == (3170.0, 350.0, 50.0, 350.0)
    assert (h2.ts.e_min, h2.ts.e_max, h2.ts.p_max) == (0.36, 1.62, 0.3)
    assert (h3.pv.area, h3.pv.p_max, h3.hp.q_max) == (380.0, 80.0, 50.0)
    assert h3.gb is None and h3.chp is None and h3.es is None


def test_st_share_mismatch_rejected():
    d = doc()
    d["hubs"][0]["devices"]["st"].update(alpha_p=0.5, alpha_q=0.6)
    with pytest.raises(ConfigError, match="shares must sum to 1"):
        scenario_from_dict(d, benchmark_path().parent)


def test_missing_profile_reference_named():
    d = doc()
    d["hubs"][2]["profiles"]["heat"] = "nowhere"
    with pytest.raises(ConfigError, match=r"hubs\.hub3\.profiles\.heat"):
        scenario_from_dict(d, benchmark_path().parent)


def test_all_errors_reported_together():
    d = doc()
    d["hubs"][2]["profiles"]["heat"] = "nowhere"
    d["admm"]["rho"] = -1.0
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict(d, benchmark_path().parent)
    assert "nowhere" in str(exc.value) and "rho" in str(exc.value)


def test_round_trip(tmp_path):
    sc = load_benchmark()
    out = tmp_path / "copy.yaml"
    write_scenario(sc, out)
    again = load_scenario(out)
    assert again.network == sc.network
    assert again.grid == sc.grid and again.admm == sc.admm
    assert again.bindings == sc.bindings
    assert set(again.profiles) == set(sc.profiles)
    assert all(again.profiles[k] == sc.profiles[k] for k in sc.profiles)


def test_round_trip_inline(tmp_path):
    sc = load_benchmark()
    out = tmp_path / "inline.yaml"
    write_scenario(sc, out, inline_profiles=True)
    again = load_scenario(out)
    assert all(again.profiles[k] == sc.profiles[k] for k in sc.profiles)


def test_missing_file_and_bad_yaml(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("hubs: [\n  - id: a\n   x: : :\n")
    with pytest.raises(ConfigError, match="line"):
        load_scenario(bad)


def test_csv_profile_day(tmp_path):
    p = Profile("load", "electric", 15, np.linspace(10, 20, 96))
    path = tmp_path / "load.csv"
    write_csv_profile(p, path)
    got = ingest_csv_profile(path, "electric")
    assert got.period_min == 15 and len(got.values) == 96 and got.span_min == 24 * 60
    assert np.array_equal(got.values, p.values)


def _write_rows(path, stamps, values):
    lines = ["timestamp,value"] + [f"{t.isoformat()},{v}" for t, v in zip(stamps, values)]
    path.write_text("\n".join(lines) + "\n")


def test_csv_gap_named(tmp_path):
    t0 = datetime(2021, 1, 4)
    stamps = [t0 + timedelta(minutes=15 * i) for i in range(10) if i != 5]
    path = tmp_path / "gap.csv"
    _write_rows(path, stamps, [1.0] * len(stamps))
    with pytest.raises(ConfigError, match="2021-01-04T01:15:00|2021-01-04 01:15:00"):
        ingest_csv_profile(path, "electric")


def test_csv_negative_load(tmp_path):
    t0 = datetime(2021, 1, 4)
    path = tmp_path / "neg.csv"
    _write_rows(path, [t0 + timedelta(minutes=15 * i) for i in range(4)], [1.0, -2.0, 3.0, 4.0])
    with pytest.raises(ConfigError):
        ingest_csv_profile(path, "heat")


def test_csv_single_column(tmp_path):
    path = tmp_path / "col.csv"
    path.write_text("value\n1\n2\n3\n4\n")
    assert list(ingest_csv_profile(path, "electric", 15).values) == [1, 2, 3, 4]
    with pytest.raises(ConfigError):
        ingest_csv_profile(path, "electric")


def test_synthetic_determinism():
    a, b = synth_profiles(3, 2, "hub2"), synth_profiles(3, 2, "hub2")
    assert all(np.array_equal(a[k], b[k]) for k in a)
    c = synth_profiles(4, 2, "hub2")
    assert not np.array_equal(a["electric"], c["electric"])


def test_irradiance_zero_at_midnight():
    irr = synth_weather(1, 3)["irradiance"].reshape(3, 96)
    assert np.all(irr[:, 0] == 0.0) and np.all(irr[:, -1] == 0.0)
    assert irr.max() <= I_PEAK


def test_clear_sky_pv_peak():
    hub1 = load_benchmark().network.hub("hub1")
    assert float(PvParams(hub1.pv.eta, hub1.pv.area).available(I_PEAK)) == pytest.approx(1008.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["hub1", "hub2", "hub3"]), st.integers(1, 3))
def test_synthetic_profiles_valid(seed, tpl, days):
    p = synth_profiles(seed, days, tpl)
    for k in ("electric", "heat", "irradiance"):
        assert p[k].shape == (96 * days,)
        assert np.all(np.isfinite(p[k])) and np.all(p[k] >= 0)


def test_with_synthetic_days():
    sc = with_synthetic_days(load_benchmark(), 9, seed=2)
    assert sc.profiles["hub1_heat"].span_min == 9 * 1440
    assert sc.seed == 2


@pytest.mark.parametrize("text,kind,pred,res", [
    ("uniform:24h:60", "uniform", 1440, 60), ("uniform:720:15min", "uniform", 720, 15),
])
def test_grid_config_parse(text, kind, pred, res):
    g = GridConfig.parse(text)
    assert (g.kind, g.t_pred_min, g.t_res_min) == (kind, pred, res)


def test_grid_config_mh():
    g = GridConfig.parse("mh:mh_72h")
    assert g.build(15).n_steps == 34 and g.label() == "mh:mh_72h"
    with pytest.raises(ConfigError):
        GridConfig.parse("mh:unknown")

import csv

import pytest
import yaml

from hubmpc.cli import main


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_missing_scenario_is_io_error(tmp_path):
    assert main(["run", "--scenario", str(tmp_path / "absent.yaml"), "--out", str(tmp_path)]) == 4


@pytest.mark.parametrize("argv", [
    ["run", "--rho", "0"],
    ["sweep", "--controllers", ""],
    ["scale", "--counts", "2"],
    ["run", "--grid", "uniform:24h:7"],
])
def test_bad_configuration_exit_code(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_run_writes_summary(tmp_path, capsys):
    code = main(["run", "--controller", "dec", "--grid", "uniform:24h:60", "--t-sim", "4h", "--out", str(tmp_path)])
    assert code == 0
    assert "cost" in capsys.readouterr().out
    summary = yaml.safe_load((tmp_path / "summary.yaml").read_text())
    assert summary["totals"]["cost"] > 0
    assert summary["timing"]["solve_time_s"] >= 0
    assert len(_rows(tmp_path / "plant_log.csv")) == 16 * 3
    assert len(_rows(tmp_path / "controller_log.csv")) == 4


def test_sweep_rows_and_gaps(tmp_path):
    code = main(["sweep", "--controllers", "dec,cmpc", "--t-res", "60", "--t-pred", "12h,24h",
                 "--t-sim", "2h", "--relax", "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "sweep.csv")
    assert len(rows) == 4
    assert all(r["status"] == "ok" for r in rows)
    for r in rows:
        assert r["gap"] != ""
        if r["controller"] == "cmpc":
            assert float(r["gap"]) == 0.0


def test_sweep_mh_rows(tmp_path):
    code = main(["sweep", "--controllers", "cmpc", "--t-res", "60", "--t-pred", "48h,72h", "--mh",
                 "--hmax", "3", "--t-sim", "1h", "--relax", "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "sweep.csv")
    assert len(rows) == 2 + 4
    assert {r["controller"] for r in rows} == {"cmpc", "mh-cmpc", "mh-dmpc"}
    assert all(r["gap"] != "" for r in rows if r["status"] == "ok")


def test_scale_small(tmp_path):
    code = main(["scale", "--counts", "3", "--grid", "uniform:12h:60", "--hmax", "3", "--t-sim", "1h", "--relax",
                 "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "scale.csv")
    assert len(rows) == 4
    assert {r["controller"].removesuffix("-LP") for r in rows} == {"CMPC", "DMPC", "MH-CMPC", "MH-DMPC"}
    hist = _rows(tmp_path / "admm_iterations_3.csv")
    # one 60 min DMPC step plus four 15 min MH-DMPC steps
    assert sum(int(h["count"]) for h in hist) == 1 + 4


class _FakeRun:
    def __init__(self, cfg):
        import numpy as np
        self.controller, self.grid = cfg.label(), cfg.grid.label()
        self.total_cost = {"dec": 110.0, "cmpc": 100.0, "dmpc": 101.0}[cfg.kind]
        self.totals = {"solve_time_s": 0.0, "heat_deficit_kwh": 0.0}
        self.iterations = np.array([3, 4]) if cfg.kind == "dmpc" else np.zeros(0, int)


def test_sweep_full_grid_structure(tmp_path, monkeypatch):
    import hubmpc.cli as cli
    from hubmpc.errors import SolverError

    def fake(sc, cfg, t_sim):
        if cfg.kind == "dmpc" and cfg.grid.t_res_min == 30 and cfg.grid.t_pred_min == 2160:
            raise SolverError("injected")
        return _FakeRun(cfg)

    monkeypatch.setattr(cli, "_run_cell", fake)
    assert main(["sweep", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "sweep.csv")
    assert len(rows) == 45
    assert len({(r["controller"], r["t_res_min"], r["t_pred_min"]) for r in rows}) == 45
    failed = [r for r in rows if r["status"] == "failed"]
    assert len(failed) == 1 and "injected" in failed[0]["error"]
    assert all(float(r["gap"]) == pytest.approx(0.1) for r in rows if r["controller"] == "dec")

    assert main(["sweep", "--mh", "--out", str(tmp_path / "mh")]) == 0
    rows = _rows(tmp_path / "mh" / "sweep.csv")
    mh = [(r["controller"], r["t_pred_min"]) for r in rows if r["controller"].startswith("mh-")]
    assert sorted(mh) == [("mh-cmpc", "2880"), ("mh-cmpc", "4320"), ("mh-dmpc", "2880"), ("mh-dmpc", "4320")]

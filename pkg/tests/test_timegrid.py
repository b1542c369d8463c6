import pytest
from hypothesis import given, strategies as st

from hubmpc.errors import ConfigError
from hubmpc.timegrid import (
    MH_48H, MH_72H, build_multi_horizon, build_uniform, controller_period, named_schedule, shift_map,
)

# Step counts of the uniform study cells, (T_pred h, T_res min) -> N
UNIFORM_CELLS = {
    (12, 15): 48, (12, 30): 24, (12, 60): 12,
    (24, 15): 96, (24, 30): 48, (24, 60): 24,
    (36, 15): 144, (36, 30): 72, (36, 60): 36,
    (48, 15): 192, (48, 30): 96, (48, 60): 48,
    (72, 15): 288, (72, 30): 144, (72, 60): 72,
}


@pytest.mark.parametrize("cell,n", sorted(UNIFORM_CELLS.items()))
def test_uniform_cells(cell, n):
    pred_h, res = cell
    g = build_uniform(pred_h * 60, res, 15)
    assert g.n_steps == n
    assert g.t_pred_min == pred_h * 60
    assert set(g.durations_min) == {res}


def test_one_step_grid():
    g = build_uniform(60, 60, 15)
    assert g.n_steps == 1 and g.steps[0].duration_min == 60


def test_multi_horizon_72h():
    g = build_multi_horizon(MH_72H, 15)
    assert g.n_steps == 34
    assert g.t_pred_min == 72 * 60
    # minutes covered per resolution block: 1 h, 3 h, 8 h, 12 h, 24 h, 24 h
    assert [c for _, _, c in g.coverage()] == [60, 180, 480, 720, 1440, 1440]


def test_multi_horizon_48h():
    g = build_multi_horizon(MH_48H, 15)
    assert g.n_steps == 30 and g.t_pred_min == 48 * 60


def test_degenerate_schedule_equals_uniform():
    assert build_multi_horizon([(60, 48)], 15) == build_uniform(48 * 60, 60, 15)


def test_schedule_mappings_accepted():
    g = build_multi_horizon([{"res_min": 15, "count": 2}, {"res_min": 30, "count": 1}], 15)
    assert g.durations_min == [15, 15, 30]


@pytest.mark.parametrize("args", [(60, 0, 15), (0, 60, 15), (100, 60, 15), (60, 20, 15)])
def test_uniform_rejects(args):
    with pytest.raises(ConfigError):
        build_uniform(*args)


@pytest.mark.parametrize("sched", [[], [(60, 2), (30, 2)], [(20, 3)], [(15, 0)]])
def test_multi_horizon_rejects(sched):
    with pytest.raises(ConfigError):
        build_multi_horizon(sched, 15)


def test_named_schedule():
    assert named_schedule("mh_72h") == MH_72H
    with pytest.raises(ConfigError):
        named_schedule("nope")


def test_controller_period():
    assert controller_period(build_multi_horizon(MH_72H, 15)) == 15
    assert controller_period(build_uniform(1440, 60, 15)) == 60
    assert controller_period(build_uniform(1440, 30, 15)) == 30


def test_shift_map_uniform():
    assert shift_map(build_uniform(240, 60, 15)) == {1: 0, 2: 1, 3: 2}


def test_shift_map_single_step():
    assert shift_map(build_uniform(60, 60, 15)) == {}


def test_shift_map_multi_horizon_head():
    m = shift_map(build_multi_horizon(MH_72H, 15))
    assert [m[k] for k in range(1, 5)] == [0, 1, 2, 3]


schedules = st.lists(st.tuples(st.sampled_from([15, 30, 60, 120, 240, 360]), st.integers(1, 8)),
                     min_size=1, max_size=6).map(lambda s: sorted(s))


@given(schedules)
def test_durations_sum_to_horizon(sched):
    g = build_multi_horizon(sched, 15)
    assert g.t_pred_min == sum(r * c for r, c in sched)
    assert g.offsets_min[0] == 0
    assert all(a.offset_min + a.duration_min == b.offset_min for a, b in zip(g.steps, g.steps[1:]))
    assert all(d % 15 == 0 for d in g.durations_min)
    assert g.durations_min == sorted(g.durations_min)


@given(schedules)
def test_shift_map_injective_and_ordered(sched):
    m = shift_map(build_multi_horizon(sched, 15))
    olds = sorted(m)
    news = [m[k] for k in olds]
    assert len(set(news)) == len(news)
    assert news == sorted(news)


@given(st.sampled_from([15, 30, 60]), st.integers(1, 96))
def test_uniform_integer_arithmetic(res, n):
    g = build_uniform(res * n, res, 15)
    assert g.n_steps == n and sum(g.durations_min) == res * n

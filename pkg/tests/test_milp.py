import itertools

import highspy
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from hubmpc.errors import SolverError
from hubmpc.hubmodel import ChpParams, Forecast, GbParams, HubSpec, build_hub_constraints
from hubmpc.milp import (
    EQ, GE, INFEASIBLE, LE, OPTIMAL, MilpLimits, ProblemBuilder, brute_force_oracle, solve_lp, solve_milp,
    to_lp_text,
)
from hubmpc.timegrid import build_uniform

from problems import random_milp


def rel(a, b):
    return abs(a - b) / max(1.0, abs(b))


def test_lp_upper_bound():
    b = ProblemBuilder()
    x = b.add_var("x", 0, 5)
    b.add_cost(x, -1.0)
    sol = solve_lp(b.build())
    assert sol.status == OPTIMAL
    assert sol.x[x] == pytest.approx(5.0) and sol.objective == pytest.approx(-5.0)


def test_lp_covering():
    b = ProblemBuilder()
    x, y = b.add_var("x"), b.add_var("y")
    b.add_cost([x, y], 1.0)
    b.add_row([(x, 1.0), (y, 1.0)], GE, 2.0)
    assert solve_lp(b.build()).objective == pytest.approx(2.0)


def _vertex_enumeration(A, bvec, c):
    """min c.x s.t. A x <= b by enumerating all basic points (tiny instances only)."""
    n = A.shape[1]
    best = np.inf
    for rows in itertools.combinations(range(A.shape[0]), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, bvec[list(rows)])
        if np.all(A @ x <= bvec + 1e-9):
            best = min(best, float(c @ x))
    return best


def test_lp_three_variable_vertex_oracle():
    # x, y, z >= 0, x + y + z <= 10, x + 2y <= 8, 3y + z <= 9, x <= 6
    A = np.array([[1, 1, 1], [1, 2, 0], [0, 3, 1], [1, 0, 0], [-1, 0, 0], [0, -1, 0], [0, 0, -1]], float)
    bv = np.array([10, 8, 9, 6, 0, 0, 0], float)
    c = np.array([-3.0, -2.0, -4.0])
    b = ProblemBuilder()
    x = b.add_vars("x", 3)
    b.add_cost(x, c)
    for row, rhs in zip(A[:4], bv[:4]):
        b.add_row([(int(x[j]), row[j]) for j in range(3) if row[j]], LE, rhs)
    assert solve_lp(b.build()).objective == pytest.approx(_vertex_enumeration(A, bv, c), abs=1e-9)


def test_all_continuous_milp_equals_lp():
    p = random_milp(3, n_bin=0, n_cont=15)
    assert solve_milp(p).objective == pytest.approx(solve_lp(p).objective, rel=1e-12)


def test_knapsack_four_binaries():
    values, weights = [10.0, 13.0, 7.0, 8.0], [5.0, 6.0, 3.0, 4.0]
    b = ProblemBuilder()
    z = b.add_vars("z", 4, binary=True, ub=1.0)
    b.add_cost(z, [-v for v in values])
    b.add_row([(int(z[j]), weights[j]) for j in range(4)], LE, 10.0)
    best = min(-sum(v for v, s in zip(values, pat) if s) for pat in itertools.product([0, 1], repeat=4)
               if sum(w for w, s in zip(weights, pat) if s) <= 10.0)
    for backend in ("bnb", "highs"):
        assert solve_milp(b.build(), backend=backend).objective == pytest.approx(best)
    assert brute_force_oracle(b.build()).objective == pytest.approx(best)


def test_infeasible():
    b = ProblemBuilder()
    x = b.add_var("x")
    b.add_row([(x, 1.0)], GE, 1.0)
    b.add_row([(x, 1.0)], LE, 0.0)
    assert solve_lp(b.build()).status == INFEASIBLE
    assert solve_milp(random_milp(5, feasible=False)).status == INFEASIBLE
    assert brute_force_oracle(random_milp(5, feasible=False)).status == INFEASIBLE


def test_oracle_refuses_large_instances():
    b = ProblemBuilder()
    b.add_vars("z", 30, binary=True, ub=1.0)
    with pytest.raises(SolverError):
        brute_force_oracle(b.build())


@pytest.mark.parametrize("seed", range(25))
def test_bnb_matches_oracle(seed):
    p = random_milp(seed, n_bin=int(1 + seed % 8))
    o = brute_force_oracle(p)
    for backend in ("bnb", "highs"):
        s = solve_milp(p, backend=backend)
        assert s.status == o.status == OPTIMAL
        assert rel(s.objective, o.objective) <= 1e-6


def test_determinism():
    p = random_milp(11)
    a, b = solve_milp(p), solve_milp(p)
    assert np.array_equal(a.x, b.x) and a.objective == b.objective
    assert a.stats.nodes == b.stats.nodes and a.stats.simplex_iterations == b.stats.simplex_iterations


def test_node_limit_reports_status():
    p = random_milp(7, n_bin=12, n_cont=30)
    s = solve_milp(p, MilpLimits(max_nodes=1))
    assert s.status in (OPTIMAL, "node_limit")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_weak_duality_against_feasible_points(seed):
    # the reported optimum is never above the objective of a known feasible point
    p = random_milp(seed, n_bin=0).relaxed()
    rng = np.random.default_rng(seed)
    sol = solve_lp(p)
    assert sol.status == OPTIMAL
    for _ in range(20):
        x = rng.uniform(p.lb, p.ub)
        if p.max_violation(x) <= 1e-9:
            assert sol.objective <= p.objective(x) + 1e-7


def test_quadratic_proximal_term():
    # min 0.5*2*(x-3)^2 + x on [0, 10] -> x = 2.5
    b = ProblemBuilder()
    x = b.add_var("x", 0, 10)
    b.add_cost(x, 1.0)
    b.set_quadratic(x, 2.0, 3.0)
    p = b.build()
    s = solve_lp(p)
    assert s.x[x] == pytest.approx(2.5, abs=1e-6)
    assert s.objective == pytest.approx(0.25 + 2.5, abs=1e-6)


def test_quadratic_with_binary():
    # min 0.5*(x-4)^2 - 3 z  s.t. x <= 2 + 10 z, z binary: z=1, x=4 -> -3
    b = ProblemBuilder()
    x = b.add_var("x", 0, 10)
    z = b.add_var("z", 0, 1, binary=True)
    b.add_cost(z, -3.0)
    b.set_quadratic(x, 1.0, 4.0)
    b.add_row([(x, 1.0), (z, -10.0)], LE, 2.0)
    p = b.build()
    for backend in ("bnb", "highs"):
        assert solve_milp(p, backend=backend).objective == pytest.approx(-3.0, abs=1e-6)
    assert brute_force_oracle(p).objective == pytest.approx(-3.0, abs=1e-6)


def test_lp_text_round_trip(tmp_path):
    p = random_milp(21, n_bin=4, n_cont=10)
    path = tmp_path / "m.lp"
    path.write_text(to_lp_text(p))
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(path))
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(brute_force_oracle(p).objective, rel=1e-6)


def _single_step(hub, heat=0.0):
    b = ProblemBuilder()
    grid = build_uniform(60, 60, 15)
    hv = build_hub_constraints(b, hub, grid, Forecast([0.0], [heat], [0.0]))
    return b, hv


def test_boiler_segment_from_oracle():
    gb = GbParams((0.59, 0.83, 0.9, 0.82), 0.0, 350.0)
    b, hv = _single_step(HubSpec("g", gb=gb), heat=350.0)
    b.set_bounds(hv.idx["Q_gb"], lb=350.0, ub=350.0)
    b.add_cost(hv.idx["F_gb"], 1.0)
    sol = brute_force_oracle(b.build())
    vals = hv.values(sol.x)
    assert [round(float(vals[f"z_gb{s}"][0])) for s in range(1, 5)] == [0, 0, 0, 1]
    assert vals["F_gb"][0] == pytest.approx(350.0 / 0.82, abs=1e-6)


def test_chp_vertex_b_from_oracle():
    chp = ChpParams(0.364, (380.0, 315.0, 745.0, 800.0), (0.0, 515.0, 1220.0, 0.0))
    b, hv = _single_step(HubSpec("c", chp=chp), heat=515.0)
    b.set_bounds(hv.idx["Q_chp"], lb=515.0, ub=515.0)
    b.add_cost(hv.idx["F_chp"], 1.0)
    vals = hv.values(brute_force_oracle(b.build()).x)
    assert vals["w_chpB"][0] == pytest.approx(1.0)
    assert vals["P_chp"][0] == pytest.approx(315.0)


def test_zero_binary_oracle_is_one_lp():
    p = random_milp(2, n_bin=0, n_cont=8)
    assert brute_force_oracle(p).objective == pytest.approx(solve_lp(p).objective)


def test_problem_validation():
    b = ProblemBuilder()
    b.add_var("x", 2.0, 1.0)
    with pytest.raises(ValueError):
        b.build()
    A = sp.csr_matrix((0, 1))
    from hubmpc.milp import MilpProblem
    with pytest.raises(ValueError):
        MilpProblem(np.array([np.nan]), A, np.zeros(0), np.zeros(0), np.zeros(1), np.ones(1), np.zeros(1, bool))

"""Sparse (mixed-integer) linear programs and the solvers behind every controller.

LPs and MIPs go to HiGHS (through ``highspy``); convex QPs go to the
Clarabel interior-point solver. On top of them sit

* :func:`solve_milp` with two backends: ``"bnb"``, an in-house best-bound
  branch-and-bound over LP/QP relaxations, and ``"highs"``, the native HiGHS
  MIP solver for dispatch-scale problems;
* :func:`brute_force_oracle`, exhaustive enumeration of binary patterns used
  as a test oracle;
* :class:`SolverSession`, a reusable model whose linear objective and
  proximal centers can be changed between solves (ADMM inner loop).

Problems may carry separable quadratic terms ``0.5 * w * (x - center)**2``.
Continuous problems and branch-and-bound node relaxations treat them exactly
as convex QPs. The native HiGHS MIP path cannot, so binaries are chosen on a
16-segment piecewise-linear outer approximation and the continuous part is
then re-solved exactly with the binaries fixed.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import clarabel
import highspy
import numpy as np
import scipy.sparse as sp

from .errors import SolverError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"
TIME_LIMIT = "time-limit"
NUMERIC_FAILURE = "numeric-failure"

LE, EQ, GE = "<=", "==", ">="

PWL_SEGMENTS = 16
MAX_ORACLE_BINARIES = 20


@dataclass(frozen=True)
class NumericPolicy:
    feasibility: float = 1e-6
    integrality: float = 1e-6
    mip_rel_gap: float = 1e-6


DEFAULT_POLICY = NumericPolicy()


@dataclass
class MilpLimits:
    max_nodes: int = 100_000
    max_seconds: float = math.inf
    rel_gap: float = DEFAULT_POLICY.mip_rel_gap


@dataclass
class MilpProblem:
    """min c.x + offset + sum 0.5*w*(x-center)^2  s.t.  row_lo <= A x <= row_hi, lb <= x <= ub."""

    c: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    is_binary: np.ndarray
    names: list[str] = field(default_factory=list)
    offset: float = 0.0
    quad_weight: np.ndarray | None = None
    quad_center: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.c)
        if self.A.shape[1] != n or len(self.lb) != n or len(self.ub) != n or len(self.is_binary) != n:
            raise ValueError("inconsistent problem dimensions")
        if np.any(self.lb > self.ub):
            bad = int(np.flatnonzero(self.lb > self.ub)[0])
            raise ValueError(f"variable {self._name(bad)} has lb > ub ({self.lb[bad]} > {self.ub[bad]})")
        b = self.is_binary
        if np.any(self.lb[b] < 0) or np.any(self.ub[b] > 1):
            raise ValueError("binary variables must have bounds within [0, 1]")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A.data))):
            raise ValueError("objective and constraint coefficients must be finite")
        if np.any(self.row_lo > self.row_hi):
            raise ValueError("row with lower bound above upper bound")

    def _name(self, j: int) -> str:
        return self.names[j] if self.names else f"x{j}"

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_binaries(self) -> int:
        return int(self.is_binary.sum())

    @property
    def has_quadratic(self) -> bool:
        return self.quad_weight is not None and bool(np.any(self.quad_weight != 0))

    def objective(self, x: np.ndarray) -> float:
        val = float(self.c @ x) + self.offset
        if self.has_quadratic:
            val += float(0.5 * np.sum(self.quad_weight * (x - self.quad_center) ** 2))
        return val

    def max_violation(self, x: np.ndarray) -> float:
        """Largest bound or row violation of ``x`` (0 when feasible)."""
        ax = self.A @ x
        viol = [0.0]
        if self.n_rows:
            viol.append(float(np.max(self.row_lo - ax, initial=0.0)))
            viol.append(float(np.max(ax - self.row_hi, initial=0.0)))
        viol.append(float(np.max(self.lb - x, initial=0.0)))
        viol.append(float(np.max(x - self.ub, initial=0.0)))
        return max(viol)

    def relaxed(self) -> "MilpProblem":
        return self.with_changes(is_binary=np.zeros(self.n_vars, dtype=bool))

    def with_changes(self, **kw) -> "MilpProblem":
        fields = dict(c=self.c, A=self.A, row_lo=self.row_lo, row_hi=self.row_hi, lb=self.lb,
                      ub=self.ub, is_binary=self.is_binary, names=self.names, offset=self.offset,
                      quad_weight=self.quad_weight, quad_center=self.quad_center)
        fields.update(kw)
        return MilpProblem(**fields)


@dataclass
class SolveStats:
    simplex_iterations: int = 0
    nodes: int = 0
    wall_time: float = 0.0


@dataclass
class MilpSolution:
    status: str
    objective: float
    x: np.ndarray | None
    stats: SolveStats = field(default_factory=SolveStats)
    bound: float = -math.inf

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class ProblemBuilder:
    """Incremental, vectorised construction of a :class:`MilpProblem`.

    Rows are added in blocks: each term is a ``(coef, index)`` pair where
    both may be arrays of the block length or scalars.
    """

    def __init__(self):
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._bin: list[np.ndarray] = []
        self.names: list[str] = []
        self.n_vars = 0
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._row_lo: list[np.ndarray] = []
        self._row_hi: list[np.ndarray] = []
        self.n_rows = 0
        self._cost: dict[int, float] = {}
        self.offset = 0.0
        self._quad: dict[int, tuple[float, float]] = {}

    def add_vars(self, name: str, n: int, lb=0.0, ub=np.inf, binary: bool = False) -> np.ndarray:
        idx = np.arange(self.n_vars, self.n_vars + n)
        self._lb.append(np.broadcast_to(np.asarray(lb, dtype=float), (n,)).copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, dtype=float), (n,)).copy())
        self._bin.append(np.full(n, binary))
        self.names.extend(f"{name}[{k}]" for k in range(n))
        self.n_vars += n
        return idx

    def add_var(self, name: str, lb=0.0, ub=np.inf, binary: bool = False) -> int:
        idx = self.add_vars(name, 1, lb, ub, binary)
        self.names[-1] = name
        return int(idx[0])

    def set_bounds(self, idx, lb=None, ub=None) -> None:
        lbs = np.concatenate(self._lb) if len(self._lb) > 1 else self._lb[0]
        ubs = np.concatenate(self._ub) if len(self._ub) > 1 else self._ub[0]
        if lb is not None:
            lbs[np.asarray(idx)] = lb
        if ub is not None:
            ubs[np.asarray(idx)] = ub
        self._lb, self._ub = [lbs], [ubs]
        if len(self._bin) > 1:
            self._bin = [np.concatenate(self._bin)]

    def add_rows(self, terms: Sequence[tuple], sense: str, rhs) -> np.ndarray:
        """Add a block of rows ``sum_t coef_t * x[idx_t]  (sense)  rhs``."""
        m = None
        for coef, idx in terms:
            for a in (coef, idx):
                if np.ndim(a):
                    m = len(a) if m is None else m
                    if len(a) != m:
                        raise ValueError("row-block terms have inconsistent lengths")
        if m is None:
            m = int(np.size(rhs)) if np.ndim(rhs) else 1
        rows = np.arange(self.n_rows, self.n_rows + m)
        for coef, idx in terms:
            c = np.broadcast_to(np.asarray(coef, dtype=float), (m,))
            i = np.broadcast_to(np.asarray(idx, dtype=np.int64), (m,))
            keep = c != 0
            self._rows.append(rows[keep])
            self._cols.append(i[keep])
            self._vals.append(c[keep])
        b = np.broadcast_to(np.asarray(rhs, dtype=float), (m,)).copy()
        self._append_bounds(b, sense, m)
        return rows

    def add_row_block(self, local_rows, cols, vals, m: int, sense: str, rhs) -> np.ndarray:
        """Add ``m`` rows from ragged COO triplets (``local_rows`` in ``[0, m)``)."""
        rows = np.arange(self.n_rows, self.n_rows + m)
        self._rows.append(rows[np.asarray(local_rows, dtype=np.int64)])
        self._cols.append(np.asarray(cols, dtype=np.int64))
        self._vals.append(np.asarray(vals, dtype=float))
        b = np.broadcast_to(np.asarray(rhs, dtype=float), (m,)).copy()
        self._append_bounds(b, sense, m)
        return rows

    def _append_bounds(self, b: np.ndarray, sense: str, m: int) -> None:
        if sense == EQ:
            lo, hi = b, b.copy()
        elif sense == LE:
            lo, hi = np.full(m, -np.inf), b
        elif sense == GE:
            lo, hi = b, np.full(m, np.inf)
        else:
            raise ValueError(f"unknown sense {sense!r}")
        self._row_lo.append(lo)
        self._row_hi.append(hi)
        self.n_rows += m

    def add_row(self, coeffs: Iterable[tuple[int, float]], sense: str, rhs: float) -> int:
        coeffs = list(coeffs)
        terms = [(np.array([c]), np.array([i])) for i, c in coeffs]
        if not terms:
            terms = [(np.array([0.0]), np.array([0]))]
        return int(self.add_rows(terms, sense, [rhs])[0])

    def add_cost(self, idx, coef) -> None:
        idx = np.atleast_1d(np.asarray(idx))
        coef = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape)
        for i, c in zip(idx.tolist(), coef.tolist()):
            self._cost[i] = self._cost.get(i, 0.0) + c

    def set_quadratic(self, idx, weight, center=0.0) -> None:
        idx = np.atleast_1d(np.asarray(idx))
        w = np.broadcast_to(np.asarray(weight, dtype=float), idx.shape)
        ctr = np.broadcast_to(np.asarray(center, dtype=float), idx.shape)
        for i, wi, ci in zip(idx.tolist(), w.tolist(), ctr.tolist()):
            self._quad[i] = (wi, ci)

    def build(self) -> MilpProblem:
        n = self.n_vars
        c = np.zeros(n)
        for i, v in self._cost.items():
            c[i] = v
        if self._rows:
            rows = np.concatenate(self._rows)
            cols = np.concatenate(self._cols)
            vals = np.concatenate(self._vals)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(self.n_rows, n))
        A.sum_duplicates()
        cat = lambda parts, dtype=float: np.concatenate(parts) if parts else np.zeros(0, dtype=dtype)
        qw = qc = None
        if self._quad:
            qw, qc = np.zeros(n), np.zeros(n)
            for i, (w, ctr) in self._quad.items():
                qw[i], qc[i] = w, ctr
        return MilpProblem(
            c=c, A=A, row_lo=cat(self._row_lo), row_hi=cat(self._row_hi),
            lb=cat(self._lb), ub=cat(self._ub), is_binary=cat(self._bin, bool),
            names=list(self.names), offset=self.offset, quad_weight=qw, quad_center=qc)


# ---------------------------------------------------------------- HiGHS glue

_STATUS = {
    highspy.HighsModelStatus.kOptimal: OPTIMAL,
    highspy.HighsModelStatus.kInfeasible: INFEASIBLE,
    highspy.HighsModelStatus.kUnbounded: UNBOUNDED,
    highspy.HighsModelStatus.kIterationLimit: ITERATION_LIMIT,
    highspy.HighsModelStatus.kTimeLimit: TIME_LIMIT,
    highspy.HighsModelStatus.kSolutionLimit: ITERATION_LIMIT,
}


def _highs(policy: NumericPolicy, time_limit: float = math.inf) -> highspy.Highs:
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("primal_feasibility_tolerance", policy.feasibility * 0.1)
    h.setOptionValue("dual_feasibility_tolerance", 1e-7)
    h.setOptionValue("mip_feasibility_tolerance", policy.integrality * 0.1)
    h.setOptionValue("mip_rel_gap", policy.mip_rel_gap)
    h.setOptionValue("mip_abs_gap", 1e-9)
    if math.isfinite(time_limit):
        h.setOptionValue("time_limit", float(time_limit))
    return h


def _pass_model(h: highspy.Highs, c, A: sp.csr_matrix, row_lo, row_hi, lb, ub, integer=None,
                offset: float = 0.0, hess_diag=None) -> None:
    csc = A.tocsc()
    lp = highspy.HighsLp()
    lp.num_col_ = A.shape[1]
    lp.num_row_ = A.shape[0]
    lp.col_cost_ = np.asarray(c, dtype=float)
    lp.col_lower_ = np.asarray(lb, dtype=float)
    lp.col_upper_ = np.asarray(ub, dtype=float)
    lp.row_lower_ = np.asarray(row_lo, dtype=float)
    lp.row_upper_ = np.asarray(row_hi, dtype=float)
    lp.offset_ = float(offset)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.num_col_ = A.shape[1]
    lp.a_matrix_.num_row_ = A.shape[0]
    lp.a_matrix_.start_ = csc.indptr.astype(np.int32)
    lp.a_matrix_.index_ = csc.indices.astype(np.int32)
    lp.a_matrix_.value_ = csc.data.astype(float)
    if integer is not None and np.any(integer):
        lp.integrality_ = [highspy.HighsVarType.kInteger if b else highspy.HighsVarType.kContinuous
                           for b in integer]
    h.passModel(lp)
    if hess_diag is not None and np.any(hess_diag != 0):
        hs = highspy.HighsHessian()
        n = A.shape[1]
        nz = np.flatnonzero(hess_diag)
        start = np.searchsorted(nz, np.arange(n + 1)).astype(np.int32)
        hs.dim_ = n
        hs.format_ = highspy.HessianFormat.kTriangular
        hs.start_ = start
        hs.index_ = nz.astype(np.int32)
        hs.value_ = np.asarray(hess_diag, dtype=float)[nz]
        h.passHessian(hs)


def _quad_expand(problem: MilpProblem):
    """Linear/constant parts of the quadratic terms: 0.5w x^2 - w c x + 0.5 w c^2."""
    if not problem.has_quadratic:
        return problem.c, problem.offset, None
    w, ctr = problem.quad_weight, problem.quad_center
    return problem.c - w * ctr, problem.offset + 0.5 * float(np.sum(w * ctr * ctr)), w


def _run(h: highspy.Highs) -> str:
    h.run()
    status = _STATUS.get(h.getModelStatus())
    if h.getModelStatus() == highspy.HighsModelStatus.kUnboundedOrInfeasible:
        h.setOptionValue("presolve", "off")
        h.run()
        h.setOptionValue("presolve", "choose")
        status = _STATUS.get(h.getModelStatus())
        if h.getModelStatus() == highspy.HighsModelStatus.kUnboundedOrInfeasible:
            status = INFEASIBLE
    return status or NUMERIC_FAILURE


def _collect(h: highspy.Highs, problem: MilpProblem, status: str, t0: float,
             policy: NumericPolicy, check_integral: bool) -> MilpSolution:
    info = h.getInfo()
    stats = SolveStats(simplex_iterations=int(max(info.simplex_iteration_count, 0)
                                              + max(info.qp_iteration_count, 0)),
                       nodes=int(max(info.mip_node_count, 0)),
                       wall_time=time.perf_counter() - t0)
    x = None
    if h.getSolution().value_valid:
        x = np.array(h.getSolution().col_value)
    if status in (OPTIMAL, ITERATION_LIMIT, TIME_LIMIT) and x is not None:
        if not _verify(problem, x, policy, check_integral):
            if status == OPTIMAL:
                return MilpSolution(NUMERIC_FAILURE, math.nan, x, stats)
            x = None
    if status == OPTIMAL:
        return MilpSolution(OPTIMAL, problem.objective(x), x, stats, bound=problem.objective(x))
    obj = problem.objective(x) if x is not None else math.nan
    return MilpSolution(status, obj, x, stats)


def _verify(problem: MilpProblem, x: np.ndarray, policy: NumericPolicy, integral: bool) -> bool:
    if not np.all(np.isfinite(x)):
        return False
    scale = 1.0 + max(float(np.max(np.abs(problem.row_lo[np.isfinite(problem.row_lo)]), initial=0.0)),
                      float(np.max(np.abs(problem.row_hi[np.isfinite(problem.row_hi)]), initial=0.0)))
    if problem.max_violation(x) > policy.feasibility * min(scale, 1e3):
        return False
    if integral and problem.n_binaries:
        xb = x[problem.is_binary]
        if np.max(np.abs(xb - np.round(xb)), initial=0.0) > policy.integrality:
            return False
    return True


_CLARABEL_STATUS = {
    "Solved": OPTIMAL,
    "AlmostSolved": OPTIMAL,          # accepted only if the feasibility check passes
    "PrimalInfeasible": INFEASIBLE,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "DualInfeasible": UNBOUNDED,
    "AlmostDualInfeasible": UNBOUNDED,
    "MaxIterations": ITERATION_LIMIT,
    "MaxTime": TIME_LIMIT,
}


def _solve_qp(problem: MilpProblem, policy: NumericPolicy, t0: float,
              max_seconds: float = math.inf) -> MilpSolution:
    """Continuous convex QP (binaries treated as continuous) with Clarabel.

    Fixed columns are substituted out first; the interior-point method
    needs a nonempty relative interior. Columns with a proximal term are
    solved relative to their (clipped) center, so the IPM tolerances act on
    the deviation rather than on a large absolute objective. The returned
    point is clipped to the variable bounds and verified like any other
    solution.
    """
    p = problem
    n = p.n_vars
    fixed = p.lb == p.ub
    free = np.flatnonzero(~fixed)
    c, _, hess = _quad_expand(p)
    hess = np.zeros(n) if hess is None else hess
    origin = np.zeros(n)
    if p.has_quadratic:
        origin = np.where(hess > 0, np.clip(p.quad_center, p.lb, p.ub), 0.0)
    origin = np.where(fixed, p.lb, origin)
    x = origin.copy()
    A = p.A.tocsc()
    shift = A @ origin
    Af = A[:, free].tocsr()
    lo, hi = p.row_lo - shift, p.row_hi - shift
    c = c + hess * origin
    eq = lo == hi
    up = ~eq & np.isfinite(hi)
    dn = ~eq & np.isfinite(lo)
    lbf, ubf = p.lb[free] - origin[free], p.ub[free] - origin[free]
    I = sp.identity(len(free), format="csr")
    ub_m, lb_m = np.isfinite(ubf), np.isfinite(lbf)
    M = sp.vstack([Af[eq], Af[up], -Af[dn], I[ub_m], -I[lb_m]]).tocsc()
    b = np.concatenate([lo[eq], hi[up], -lo[dn], ubf[ub_m], -lbf[lb_m]])
    cones = [clarabel.ZeroConeT(int(eq.sum())), clarabel.NonnegativeConeT(M.shape[0] - int(eq.sum()))]
    P = sp.diags(hess[free]).tocsc()
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    if math.isfinite(max_seconds):
        settings.time_limit = float(max_seconds)
    res = clarabel.DefaultSolver(P, np.asarray(c[free], dtype=float), M, b, cones, settings).solve()
    status = _CLARABEL_STATUS.get(str(res.status), NUMERIC_FAILURE)
    stats = SolveStats(simplex_iterations=int(res.iterations), nodes=0, wall_time=time.perf_counter() - t0)
    if status not in (OPTIMAL, ITERATION_LIMIT, TIME_LIMIT):
        return MilpSolution(status, math.nan, None, stats)
    x[free] = origin[free] + np.clip(np.asarray(res.x), lbf, ubf)
    x[free] = np.clip(x[free], p.lb[free], p.ub[free])
    if not _verify(p, x, policy, False):
        return MilpSolution(NUMERIC_FAILURE if status == OPTIMAL else status, math.nan,
                            x if status == OPTIMAL else None, stats)
    return MilpSolution(status, p.objective(x), x, stats, bound=p.objective(x) if status == OPTIMAL else -math.inf)


def solve_lp(problem: MilpProblem, policy: NumericPolicy = DEFAULT_POLICY,
             max_seconds: float = math.inf) -> MilpSolution:
    """Solve the continuous relaxation (binaries relaxed to [0, 1]).

    Quadratic terms make this a convex QP, solved exactly.
    """
    t0 = time.perf_counter()
    relaxed = problem.relaxed()
    if relaxed.has_quadratic:
        return _solve_qp(relaxed, policy, t0, max_seconds)
    c, off, hess = _quad_expand(relaxed)
    h = _highs(policy, max_seconds)
    _pass_model(h, c, relaxed.A, relaxed.row_lo, relaxed.row_hi, relaxed.lb, relaxed.ub,
                offset=off, hess_diag=hess)
    status = _run(h)
    return _collect(h, relaxed, status, t0, policy, check_integral=False)


# ------------------------------------------------------------ branch & bound

class _Relaxation:
    """A continuous relaxation kept in one HiGHS instance; binaries re-bounded per node."""

    def __init__(self, problem: MilpProblem, policy: NumericPolicy, time_limit: float = math.inf):
        self.problem = problem.relaxed()
        self.policy = policy
        self.h = None
        if not problem.has_quadratic:
            self.h = _highs(policy, time_limit)
            _pass_model(self.h, problem.c, problem.A, problem.row_lo, problem.row_hi, problem.lb, problem.ub,
                        offset=problem.offset)
        self.bin_idx = np.flatnonzero(problem.is_binary).astype(np.int32)
        self.lb0 = problem.lb[self.bin_idx].copy()
        self.ub0 = problem.ub[self.bin_idx].copy()
        self.iterations = 0

    def solve(self, lo: np.ndarray, hi: np.ndarray) -> MilpSolution:
        t0 = time.perf_counter()
        node = self.problem.with_changes(
            lb=_replace(self.problem.lb, self.bin_idx, lo), ub=_replace(self.problem.ub, self.bin_idx, hi))
        if self.h is None:
            sol = _solve_qp(node, self.policy, t0)
        else:
            if len(self.bin_idx):
                self.h.changeColsBounds(len(self.bin_idx), self.bin_idx, lo.astype(float), hi.astype(float))
            sol = _collect(self.h, node, _run(self.h), t0, self.policy, check_integral=False)
        self.iterations += sol.stats.simplex_iterations
        return sol


def _replace(arr, idx, vals):
    out = arr.copy()
    out[idx] = vals
    return out


def _branch_and_bound(problem: MilpProblem, limits: MilpLimits, policy: NumericPolicy) -> MilpSolution:
    t0 = time.perf_counter()
    deadline = t0 + limits.max_seconds
    relax = _Relaxation(problem, policy)
    bins = relax.bin_idx
    tol = policy.integrality

    best_x, best_obj = None, math.inf
    nodes = 0
    counter = itertools.count()
    heap: list = []

    root = relax.solve(relax.lb0, relax.ub0)
    nodes += 1
    if root.status in (INFEASIBLE, UNBOUNDED, NUMERIC_FAILURE):
        root.stats = SolveStats(relax.iterations, nodes, time.perf_counter() - t0)
        return root
    if root.status != OPTIMAL:
        return MilpSolution(root.status, math.nan, None, SolveStats(relax.iterations, nodes, time.perf_counter() - t0))
    heapq.heappush(heap, (root.objective, next(counter), relax.lb0.copy(), relax.ub0.copy(), root.x))

    def gap_ok(bound: float) -> bool:
        return bound >= best_obj - max(limits.rel_gap * abs(best_obj), 1e-9)

    status = OPTIMAL
    while heap:
        bound, _, lo, hi, x = heapq.heappop(heap)
        if best_x is not None and gap_ok(bound):
            heap.clear()
            break
        xb = x[bins]
        frac = np.abs(xb - np.round(xb))
        if len(bins) == 0 or frac.max() <= tol:
            if bound < best_obj:
                xi = x.copy()
                xi[bins] = np.round(xb)
                best_x, best_obj = xi, problem.objective(xi)
            continue
        if nodes >= limits.max_nodes:
            status = ITERATION_LIMIT
            heapq.heappush(heap, (bound, next(counter), lo, hi, x))
            break
        if time.perf_counter() > deadline:
            status = TIME_LIMIT
            heapq.heappush(heap, (bound, next(counter), lo, hi, x))
            break
        # most fractional; argmax returns the lowest index on ties
        j = int(np.argmax(np.round(-np.abs(xb - 0.5), 12)))
        for val in (0.0, 1.0):
            clo, chi = lo.copy(), hi.copy()
            clo[j] = chi[j] = val
            child = relax.solve(clo, chi)
            nodes += 1
            if child.status == OPTIMAL and (best_x is None or not gap_ok(child.objective)):
                heapq.heappush(heap, (child.objective, next(counter), clo, chi, child.x))
            elif child.status not in (OPTIMAL, INFEASIBLE):
                return MilpSolution(NUMERIC_FAILURE, math.nan, best_x,
                                    SolveStats(relax.iterations, nodes, time.perf_counter() - t0))

    stats = SolveStats(relax.iterations, nodes, time.perf_counter() - t0)
    lower = min([h[0] for h in heap], default=best_obj)
    if best_x is None:
        return MilpSolution(INFEASIBLE if status == OPTIMAL else status, math.nan, None, stats)
    return MilpSolution(status, best_obj, best_x, stats, bound=min(lower, best_obj))


# ------------------------------------------------------- native HiGHS MIP path

def _pwl_epigraph(problem: MilpProblem, segments: int = PWL_SEGMENTS):
    """Extend ``problem`` with epigraph variables t_i >= 0.5 w_i x_i^2 (tangent cuts).

    The linear part of each proximal term goes into the cost vector, so the cuts
    do not depend on the centers and can be built once.
    """
    q = np.flatnonzero(problem.quad_weight)
    n, m = problem.n_vars, len(q)
    lo = problem.lb[q]
    hi = problem.ub[q]
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise SolverError("piecewise-linear proximal terms need finite variable bounds")
    w = problem.quad_weight[q]
    pts = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, segments + 1)[None, :]
    # tangent at a: t - w a x >= -0.5 w a^2
    rows = np.repeat(np.arange(m * (segments + 1)), 2)
    cols = np.empty(2 * m * (segments + 1), dtype=np.int64)
    vals = np.empty_like(cols, dtype=float)
    cols[0::2] = np.repeat(n + np.arange(m), segments + 1)
    vals[0::2] = 1.0
    cols[1::2] = np.repeat(q, segments + 1)
    vals[1::2] = -(w[:, None] * pts).ravel()
    cut = sp.csr_matrix((vals, (rows, cols)), shape=(m * (segments + 1), n + m))
    A = sp.vstack([sp.hstack([problem.A, sp.csr_matrix((problem.n_rows, m))]), cut]).tocsr()
    row_lo = np.concatenate([problem.row_lo, -(0.5 * w[:, None] * pts ** 2).ravel()])
    row_hi = np.concatenate([problem.row_hi, np.full(m * (segments + 1), np.inf)])
    return A, row_lo, row_hi, q


class SolverSession:
    """A problem whose structure is fixed while its objective is re-set between solves.

    ``backend`` selects how binaries are handled: ``"relaxed"`` drops
    integrality, ``"highs"`` uses the native MIP solver (with the PWL + exact
    polish scheme when quadratic terms are present), ``"bnb"`` calls the
    in-house branch-and-bound on every solve.
    """

    def __init__(self, problem: MilpProblem, backend: str = "highs",
                 policy: NumericPolicy = DEFAULT_POLICY, limits: MilpLimits | None = None):
        if backend not in ("relaxed", "highs", "bnb"):
            raise ValueError(f"unknown backend {backend!r}")
        self.problem = problem
        self.policy = policy
        self.limits = limits or MilpLimits(rel_gap=policy.mip_rel_gap)
        self.backend = backend if problem.n_binaries else "relaxed"
        self._lp: highspy.Highs | None = None
        self._mip: highspy.Highs | None = None
        self._q = None

    def update(self, c: np.ndarray | None = None, quad_center: np.ndarray | None = None,
               quad_weight: np.ndarray | None = None) -> None:
        kw = {}
        if c is not None:
            kw["c"] = np.asarray(c, dtype=float)
        if quad_center is not None:
            kw["quad_center"] = np.asarray(quad_center, dtype=float)
        if quad_weight is not None:
            kw["quad_weight"] = np.asarray(quad_weight, dtype=float)
            self._mip = None
        self.problem = self.problem.with_changes(**kw)

    def _continuous(self, p: MilpProblem, t0: float, integral: bool) -> MilpSolution:
        """Continuous solve at the bounds of ``p`` (QPs exactly, LPs on a reused HiGHS model)."""
        if p.has_quadratic:
            sol = _solve_qp(p, self.policy, t0, self.limits.max_seconds)
            if sol.status == OPTIMAL and integral and not _verify(p, sol.x, self.policy, True):
                return MilpSolution(NUMERIC_FAILURE, math.nan, sol.x, sol.stats)
            return sol
        if self._lp is None:
            self._lp = _highs(self.policy, self.limits.max_seconds)
            _pass_model(self._lp, p.c, p.A, p.row_lo, p.row_hi, p.lb, p.ub, offset=p.offset)
        n = p.n_vars
        self._lp.changeColsCost(n, np.arange(n, dtype=np.int32), p.c)
        self._lp.changeColsBounds(n, np.arange(n, dtype=np.int32), p.lb, p.ub)
        return _collect(self._lp, p, _run(self._lp), t0, self.policy, integral)

    def solve(self) -> MilpSolution:
        p = self.problem
        if self.backend == "bnb":
            return solve_milp(p, self.limits, backend="bnb", policy=self.policy)
        if self.backend == "relaxed":
            return self._continuous(p.relaxed(), time.perf_counter(), False)
        if not p.has_quadratic:
            return _solve_highs_mip(p, self.limits, self.policy)
        return self._solve_pwl_polish()

    def _solve_pwl_polish(self) -> MilpSolution:
        p = self.problem
        t0 = time.perf_counter()
        n = p.n_vars
        c_lin = p.c - np.where(p.quad_weight != 0, p.quad_weight * p.quad_center, 0.0)
        if self._mip is None:
            A, rlo, rhi, q = _pwl_epigraph(p)
            self._q = q
            m = len(q)
            self._mip = _highs(self.policy, self.limits.max_seconds)
            self._mip.setOptionValue("mip_rel_gap", self.limits.rel_gap)
            _pass_model(self._mip, np.concatenate([c_lin, np.ones(m)]), A, rlo, rhi,
                        np.concatenate([p.lb, np.zeros(m)]), np.concatenate([p.ub, np.full(m, np.inf)]),
                        integer=np.concatenate([p.is_binary, np.zeros(m, dtype=bool)]))
        else:
            self._mip.changeColsCost(n, np.arange(n, dtype=np.int32), c_lin)
        status = _run(self._mip)
        info = self._mip.getInfo()
        nodes = int(max(info.mip_node_count, 0))
        if status != OPTIMAL or not self._mip.getSolution().value_valid:
            return MilpSolution(status, math.nan, None, SolveStats(0, nodes, time.perf_counter() - t0))
        xb = np.round(np.array(self._mip.getSolution().col_value)[:n][p.is_binary])
        lb, ub = p.lb.copy(), p.ub.copy()
        lb[p.is_binary] = ub[p.is_binary] = xb
        sol = self._continuous(p.with_changes(lb=lb, ub=ub), t0, True)
        sol.stats.nodes = nodes
        return sol


def _solve_highs_mip(problem: MilpProblem, limits: MilpLimits, policy: NumericPolicy) -> MilpSolution:
    t0 = time.perf_counter()
    if problem.has_quadratic:
        return SolverSession(problem, "highs", policy, limits).solve()
    h = _highs(NumericPolicy(policy.feasibility, policy.integrality, limits.rel_gap), limits.max_seconds)
    h.setOptionValue("mip_max_nodes", int(limits.max_nodes))
    _pass_model(h, problem.c, problem.A, problem.row_lo, problem.row_hi, problem.lb, problem.ub,
                integer=problem.is_binary, offset=problem.offset)
    status = _run(h)
    sol = _collect(h, problem, status, t0, policy, check_integral=True)
    if sol.x is not None and problem.n_binaries:
        # snap binaries, re-check: the reported point must itself be integral-feasible
        xi = sol.x.copy()
        xi[problem.is_binary] = np.round(xi[problem.is_binary])
        if problem.max_violation(xi) <= policy.feasibility * 10:
            sol.x = xi
            sol.objective = problem.objective(xi)
    info = h.getInfo()
    if status == OPTIMAL:
        sol.bound = float(info.mip_dual_bound) if math.isfinite(info.mip_dual_bound) else sol.objective
    return sol


def solve_milp(problem: MilpProblem, limits: MilpLimits | None = None, backend: str = "bnb",
               policy: NumericPolicy = DEFAULT_POLICY) -> MilpSolution:
    """Best integral solution with relative gap <= ``limits.rel_gap``.

    ``backend="bnb"`` runs the in-house branch-and-bound (best-bound node
    selection, most-fractional branching, ties to the lowest variable id);
    ``backend="highs"`` delegates to the HiGHS MIP solver.
    """
    limits = limits or MilpLimits(rel_gap=policy.mip_rel_gap)
    if problem.n_binaries == 0:
        return solve_lp(problem, policy, limits.max_seconds)
    if backend == "bnb":
        return _branch_and_bound(problem, limits, policy)
    if backend == "highs":
        return _solve_highs_mip(problem, limits, policy)
    raise ValueError(f"unknown backend {backend!r}")


def brute_force_oracle(problem: MilpProblem, policy: NumericPolicy = DEFAULT_POLICY) -> MilpSolution:
    """Exact optimum by enumerating every binary assignment (Gray-code order).

    Each pattern fixes the binaries and solves the continuous remainder.
    """
    nb = problem.n_binaries
    if nb > MAX_ORACLE_BINARIES:
        raise SolverError(f"brute-force oracle refuses {nb} binaries (limit {MAX_ORACLE_BINARIES})")
    t0 = time.perf_counter()
    if nb == 0:
        return solve_lp(problem, policy)
    relax = _Relaxation(problem, policy)
    best = None
    lo = relax.lb0.copy()
    hi = relax.ub0.copy()
    pattern = np.zeros(nb)
    count = 0
    for g in range(1 << nb):
        if g:
            flip = (g & -g).bit_length() - 1
            pattern[flip] = 1.0 - pattern[flip]
        count += 1
        if np.any(pattern < relax.lb0) or np.any(pattern > relax.ub0):
            continue
        lo[:] = pattern
        hi[:] = pattern
        sol = relax.solve(lo, hi)
        if sol.status == OPTIMAL:
            if best is None or sol.objective < best.objective:
                x = sol.x.copy()
                x[relax.bin_idx] = pattern
                best = MilpSolution(OPTIMAL, problem.objective(x), x)
        elif sol.status == UNBOUNDED:
            return MilpSolution(UNBOUNDED, -math.inf, None, SolveStats(relax.iterations, count, time.perf_counter() - t0))
        elif sol.status != INFEASIBLE:
            return MilpSolution(NUMERIC_FAILURE, math.nan, None, SolveStats(relax.iterations, count, time.perf_counter() - t0))
    stats = SolveStats(relax.iterations, count, time.perf_counter() - t0)
    if best is None:
        return MilpSolution(INFEASIBLE, math.nan, None, stats)
    best.stats = stats
    best.bound = best.objective
    return best


def to_lp_text(problem: MilpProblem) -> str:
    """Render the problem in CPLEX LP text format (quadratic terms included)."""
    names = problem.names or [f"x{j}" for j in range(problem.n_vars)]
    safe = [n.replace("[", "(").replace("]", ")").replace(",", "_") for n in names]

    def expr(pairs) -> str:
        out = []
        for j, v in pairs:
            out.append(f"{'-' if v < 0 else '+'} {abs(v):.12g} {safe[j]}")
        s = " ".join(out) if out else "0 x0"
        return s[2:] if s.startswith("+ ") else s

    c, off, hess = _quad_expand(problem)
    lines = ["\\ generated by hubmpc", "Minimize", " obj: " + expr((j, v) for j, v in enumerate(c) if v)]
    if hess is not None:
        quad = " + ".join(f"{w:.12g} {safe[j]} ^ 2" for j, w in enumerate(hess) if w)
        lines[-1] += f" + [ {quad} ] / 2"
    if off:
        lines[-1] += f" + {off:.12g} constant"
    lines.append("Subject To")
    A = problem.A.tocsr()
    for i in range(problem.n_rows):
        seg = slice(A.indptr[i], A.indptr[i + 1])
        e = expr(zip(A.indices[seg].tolist(), A.data[seg].tolist()))
        lo, hi = problem.row_lo[i], problem.row_hi[i]
        if lo == hi:
            lines.append(f" r{i}: {e} = {hi:.12g}")
        else:
            if np.isfinite(lo):
                lines.append(f" r{i}_lo: {e} >= {lo:.12g}")
            if np.isfinite(hi):
                lines.append(f" r{i}_hi: {e} <= {hi:.12g}")
    lines.append("Bounds")
    for j in range(problem.n_vars):
        lo, hi = problem.lb[j], problem.ub[j]
        lo_s = "-inf" if lo == -np.inf else f"{lo:.12g}"
        hi_s = "+inf" if hi == np.inf else f"{hi:.12g}"
        lines.append(f" {lo_s} <= {safe[j]} <= {hi_s}")
    if problem.n_binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(safe[j] for j in np.flatnonzero(problem.is_binary)))
    lines.append("End")
    return "\n".join(lines) + "\n"

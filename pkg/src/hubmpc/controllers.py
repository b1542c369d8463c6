"""Decentralised, centralised and consensus-ADMM distributed MPC for a hub network.

All three controllers solve over a :class:`~hubmpc.timegrid.TimeGrid` and
return a :class:`DispatchPlan`. The distributed controller runs Algorithm-1
style consensus ADMM: every round each hub solves its own subproblem,
sends its local estimate of each bilateral trade to the partner hub over a
:class:`MessageFabric`, and both ends average and update their duals.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, ProtocolError, SolverError
from .hubmodel import (
    Forecast, HubSpec, HubState, HubVars, NetworkSpec, PairVars, TariffPath, add_trade_vars,
    build_coupling_constraints, build_hub_constraints, hub_stage_cost, stage_cost,
)
from .milp import (
    OPTIMAL, MilpLimits, MilpProblem, MilpSolution, NumericPolicy, ProblemBuilder, SolverSession, solve_milp,
)
from .timegrid import TimeGrid, shift_map


@dataclass
class SolveOptions:
    relax_binaries: bool = False
    backend: str = "highs"          # "highs" or "bnb"
    rel_gap: float = 1e-6
    max_seconds: float = math.inf

    def limits(self) -> MilpLimits:
        return MilpLimits(max_seconds=self.max_seconds, rel_gap=self.rel_gap)

    @property
    def session_backend(self) -> str:
        return "relaxed" if self.relax_binaries else self.backend


@dataclass
class AdmmParams:
    rho: float = 0.1
    eps: float = 1e-3
    h_max: int = 150
    max_seconds: float = 600.0

    def validate(self):
        if not self.rho > 0:
            raise ConfigError(f"ADMM penalty rho must be positive, got {self.rho}")
        if not self.eps > 0:
            raise ConfigError(f"ADMM tolerance eps must be positive, got {self.eps}")
        if self.h_max < 1:
            raise ConfigError(f"h_max must be >= 1, got {self.h_max}")


# --------------------------------------------------------------------- plans

@dataclass
class HubPlan:
    hub_id: str
    values: dict[str, np.ndarray]
    cost: np.ndarray          # monetary cost per step (CHF)
    penalty: np.ndarray       # heat-slack penalty per step (CHF)
    balance_residual: float = 0.0   # max |electric balance residual| over steps (kW)


@dataclass
class DispatchPlan:
    grid: TimeGrid
    hubs: dict[str, HubPlan]
    trades: dict[tuple[str, str], np.ndarray]   # pair -> (4, N): P_ab, P_ba, Q_ab, Q_ba
    objective: float
    status: str = OPTIMAL
    wall_time: float = 0.0
    iterations: int = 0
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    converged: bool = True
    n_variables: int = 0

    def setpoints(self, hub_id: str, k: int = 0) -> dict[str, float]:
        return {name: float(v[k]) for name, v in self.hubs[hub_id].values.items()}

    def trade_inputs(self, hub_id: str, network: NetworkSpec, k: int = 0) -> list[tuple]:
        """Per-pair (export_e, import_e, zeta_e, export_h, import_h, zeta_h) at step k for one hub."""
        out = []
        for pair, tr in self.trades.items():
            if hub_id not in pair:
                continue
            link = network.links[pair]
            a_side = hub_id == pair[0]
            p_ab, p_ba, q_ab, q_ba = (float(x) for x in tr[:, k])
            if a_side:
                out.append((p_ab, p_ba, link.zeta_e, q_ab, q_ba, link.zeta_h))
            else:
                out.append((p_ba, p_ab, link.zeta_e, q_ba, q_ab, link.zeta_h))
        return out

    def planned_cost(self, k: int | None = None) -> float:
        if k is None:
            return float(sum(h.cost.sum() for h in self.hubs.values()))
        return float(sum(h.cost[k] for h in self.hubs.values()))

    def max_cyclic_trade(self) -> float:
        """Largest min(P_ij, P_ji) / min(Q_ij, Q_ji) over pairs and steps."""
        worst = 0.0
        for tr in self.trades.values():
            worst = max(worst, float(np.max(np.minimum(tr[0], tr[1]), initial=0.0)),
                        float(np.max(np.minimum(tr[2], tr[3]), initial=0.0)))
        return worst


def _hub_imports(hv_trades, x: np.ndarray, n: int):
    imp_e = np.zeros(n)
    imp_h = np.zeros(n)
    for th in hv_trades:
        imp_e += x[th.import_e]
        imp_h += x[th.import_h]
    return imp_e, imp_h


def _hub_plan(hv: HubVars, x: np.ndarray, tariffs: TariffPath, grid: TimeGrid, penalty: float,
              problem: MilpProblem) -> HubPlan:
    vals = hv.values(x)
    rows = hv.rows["electric"]
    resid = float(np.max(np.abs(problem.A[rows] @ x - problem.row_lo[rows]), initial=0.0))
    dt = np.array(grid.durations_h)
    imp_e, imp_h = _hub_imports(hv.trades, x, hv.n)
    cost = stage_cost(vals["P_in"], vals["P_out"], vals.get("F_g", 0.0), imp_e, imp_h, tariffs, dt)
    pen = dt * penalty * (vals["heat_surplus"] + vals["heat_deficit"])
    return HubPlan(hv.hub_id, vals, np.asarray(cost, dtype=float), pen, resid)


def _check_solution(sol: MilpSolution, what: str) -> np.ndarray:
    if sol.x is None or sol.status not in (OPTIMAL, "iteration-limit", "time-limit"):
        raise SolverError(f"{what}: solver returned {sol.status}")
    return sol.x


def _solve(builder: ProblemBuilder, options: SolveOptions) -> tuple[MilpSolution, MilpProblem]:
    problem = builder.build()
    if options.relax_binaries:
        problem = problem.relaxed()
    sol = solve_milp(problem, options.limits(), backend=options.backend,
                     policy=NumericPolicy(mip_rel_gap=options.rel_gap))
    return sol, problem


# ---------------------------------------------------------------- DecMPC/CMPC

def solve_decmpc(hub: HubSpec, grid: TimeGrid, forecast: Forecast, tariffs: TariffPath,
                 state: HubState | None = None, heat_penalty: float = 10.0,
                 options: SolveOptions | None = None) -> DispatchPlan:
    """Isolated single-hub economic dispatch (no trades)."""
    options = options or SolveOptions()
    t0 = time.perf_counter()
    b = ProblemBuilder()
    hv = build_hub_constraints(b, hub, grid, forecast, state)
    hub_stage_cost(b, hv, tariffs, grid, heat_penalty, coupled=False)
    sol, problem = _solve(b, options)
    x = _check_solution(sol, f"DecMPC hub {hub.id}")
    plan = _hub_plan(hv, x, tariffs, grid, heat_penalty, problem)
    return DispatchPlan(grid, {hub.id: plan}, {}, float(sol.objective), sol.status,
                        time.perf_counter() - t0, n_variables=problem.n_vars)


def solve_decmpc_network(network: NetworkSpec, grid: TimeGrid, forecasts: Mapping[str, Forecast],
                         tariffs: TariffPath, states: Mapping[str, HubState] | None = None,
                         options: SolveOptions | None = None) -> DispatchPlan:
    """DecMPC for every hub; trades are all zero."""
    states = states or {}
    t0 = time.perf_counter()
    hubs, obj, nvars = {}, 0.0, 0
    for hub in network.hubs:
        p = solve_decmpc(hub, grid, forecasts[hub.id], tariffs, states.get(hub.id),
                         network.heat_slack_penalty, options)
        hubs.update(p.hubs)
        obj += p.objective
        nvars += p.n_variables
    trades = {pair: np.zeros((4, grid.n_steps)) for pair in network.pairs}
    return DispatchPlan(grid, hubs, trades, obj, OPTIMAL, time.perf_counter() - t0, n_variables=nvars)


def build_cmpc(network: NetworkSpec, grid: TimeGrid, forecasts: Mapping[str, Forecast],
               tariffs: TariffPath, states: Mapping[str, HubState] | None = None):
    states = states or {}
    b = ProblemBuilder()
    pair_vars = build_coupling_constraints(b, network, grid)
    hvs = {}
    for hub in network.hubs:
        handles = [pv.handles_for(hub.id, network.links[p]) for p, pv in pair_vars.items() if hub.id in p]
        hv = build_hub_constraints(b, hub, grid, forecasts[hub.id], states.get(hub.id), handles)
        hub_stage_cost(b, hv, tariffs, grid, network.heat_slack_penalty, coupled=True)
        hvs[hub.id] = hv
    return b, hvs, pair_vars


def solve_cmpc(network: NetworkSpec, grid: TimeGrid, forecasts: Mapping[str, Forecast],
               tariffs: TariffPath, states: Mapping[str, HubState] | None = None,
               options: SolveOptions | None = None) -> DispatchPlan:
    """Monolithic network dispatch with bilateral electrical and thermal trades."""
    options = options or SolveOptions()
    t0 = time.perf_counter()
    b, hvs, pair_vars = build_cmpc(network, grid, forecasts, tariffs, states)
    sol, problem = _solve(b, options)
    nvars = problem.n_vars
    x = _check_solution(sol, "CMPC")
    hubs = {h: _hub_plan(hv, x, tariffs, grid, network.heat_slack_penalty, problem) for h, hv in hvs.items()}
    trades = {p: np.vstack([x[c] for c in pv.components]) for p, pv in pair_vars.items()}
    return DispatchPlan(grid, hubs, trades, float(sol.objective), sol.status,
                        time.perf_counter() - t0, n_variables=nvars)


# ----------------------------------------------------------------------- ADMM

@dataclass
class Message:
    round: int
    sender: str
    receiver: str
    pair: tuple[str, str]
    kind: str
    payload: np.ndarray
    session: int = 0        # control step (closed-loop time) the round belongs to


class MessageFabric:
    """Deterministic, round-synchronous in-process exchange between hub agents.

    Every message is logged; :meth:`audit` checks that only trade-copy
    payloads crossed hub boundaries.
    """

    TRADE_COPY = "trade_copy"

    def __init__(self):
        self.log: list[Message] = []
        self._inbox: dict[tuple[int, int, str], list[Message]] = {}
        self.session = 0

    def begin_session(self, session: int):
        """Start a new control step; round numbers restart inside it."""
        self.session = int(session)

    def send(self, round_: int, sender: str, receiver: str, pair: tuple[str, str], payload: np.ndarray):
        msg = Message(round_, sender, receiver, pair, self.TRADE_COPY, np.array(payload, copy=True), self.session)
        self.log.append(msg)
        self._inbox.setdefault((self.session, round_, receiver), []).append(msg)

    def receive(self, round_: int, receiver: str) -> list[Message]:
        return self._inbox.pop((self.session, round_, receiver), [])

    def audit(self, network: NetworkSpec, n_steps: int) -> list[str]:
        """Problems found in the log (empty when the privacy property holds)."""
        problems = []
        rounds: dict[tuple[int, int], dict[tuple, int]] = {}
        for m in self.log:
            if m.kind != self.TRADE_COPY:
                problems.append(f"round {m.round}: non-trade payload {m.kind!r} from {m.sender}")
            if m.pair not in network.links or not network.links[m.pair].connected:
                problems.append(f"round {m.round}: message on non-adjacent pair {m.pair}")
            if set(m.pair) != {m.sender, m.receiver}:
                problems.append(f"round {m.round}: {m.sender}->{m.receiver} outside pair {m.pair}")
            if m.payload.shape != (4, n_steps):
                problems.append(f"round {m.round}: payload shape {m.payload.shape} != (4, {n_steps})")
            key, rk = (m.sender, m.pair), (m.session, m.round)
            rounds.setdefault(rk, {})[key] = rounds.setdefault(rk, {}).get(key, 0) + 1
        expected = {(h, p) for p in network.pairs if network.links[p].connected for h in p}
        for (sess, r), counts in sorted(rounds.items()):
            if set(counts) != expected:
                problems.append(f"step {sess} round {r}: senders {sorted(counts)} != expected {sorted(expected)}")
            problems.extend(f"step {sess} round {r}: {k} sent {c} messages" for k, c in counts.items() if c != 1)
        return problems


@dataclass
class AdmmState:
    """Consensus state shared (conceptually replicated) by the hub agents."""

    pairs: list[tuple[str, str]]
    n_steps: int
    rho: float
    trades: dict[tuple[str, str], np.ndarray]
    duals: dict[tuple[tuple[str, str], str], np.ndarray]
    iteration: int = 0
    primal_residual: float = math.inf
    dual_residual: float = math.inf
    history: list[tuple[float, float]] = field(default_factory=list)
    converged: bool = False

    @classmethod
    def zeros(cls, pairs, n_steps: int, rho: float) -> "AdmmState":
        trades = {p: np.zeros((4, n_steps)) for p in pairs}
        duals = {(p, h): np.zeros((4, n_steps)) for p in pairs for h in p}
        return cls(list(pairs), n_steps, rho, trades, duals)

    def duals_for(self, hub_id: str) -> dict[tuple[str, str], np.ndarray]:
        return {p: self.duals[(p, hub_id)] for p in self.pairs if hub_id in p}


def admm_round(state: AdmmState, reports: Mapping[tuple[tuple[str, str], str], np.ndarray]) -> AdmmState:
    """Average the two local copies of every trade and update both duals.

    ``reports`` maps (pair, hub) to that hub's local copy (shape (4, N)).
    Returns a new state with the iteration counter incremented.
    """
    rho = state.rho
    trades, duals = {}, {}
    r2 = s2 = 0.0
    for pair in state.pairs:   # fixed order keeps the float sums reproducible
        copies = []
        for hub in pair:
            if (pair, hub) not in reports:
                raise ProtocolError(f"hub {hub} did not report pair {pair[0]}-{pair[1]} "
                                    f"in round {state.iteration + 1}")
            copies.append(np.asarray(reports[(pair, hub)], dtype=float))
        p_new = 0.5 * (copies[0] + copies[1])
        for hub, c in zip(pair, copies):
            duals[(pair, hub)] = state.duals[(pair, hub)] + rho * (c - p_new)
            r2 += float(np.sum((c - p_new) ** 2))
        s2 += float(np.sum((p_new - state.trades[pair]) ** 2))
        trades[pair] = p_new
    r, s = math.sqrt(r2), rho * math.sqrt(s2)
    return AdmmState(state.pairs, state.n_steps, rho, trades, duals, state.iteration + 1, r, s,
                     state.history + [(r, s)])


class HubAgent:
    """One hub's controller in the distributed scheme.

    The subproblem structure is built once per MPC step; each ADMM round only
    changes the linear dual term and the proximal centers.
    """

    def __init__(self, hub: HubSpec, network: NetworkSpec, grid: TimeGrid, forecast: Forecast,
                 tariffs: TariffPath, rho: float, state: HubState | None = None,
                 options: SolveOptions | None = None):
        self.hub = hub
        self.grid = grid
        self.tariffs = tariffs
        self.penalty = network.heat_slack_penalty
        self.options = options or SolveOptions()
        self.pairs = network.neighbors(hub.id)
        n = grid.n_steps
        b = ProblemBuilder()
        self.copies: dict[tuple[str, str], PairVars] = {}
        handles = []
        for pair in self.pairs:
            pv = add_trade_vars(b, pair, network.links[pair], n, prefix=f"{hub.id}")
            self.copies[pair] = pv
            handles.append(pv.handles_for(hub.id, network.links[pair]))
        self.hv = build_hub_constraints(b, hub, grid, forecast, state, handles)
        hub_stage_cost(b, self.hv, tariffs, grid, self.penalty, coupled=True)
        self._copy_idx = {p: pv.stacked() for p, pv in self.copies.items()}
        allcopy = np.concatenate(list(self._copy_idx.values())) if self.pairs else np.zeros(0, dtype=int)
        b.set_quadratic(allcopy, rho, 0.0)
        problem = b.build()
        if self.options.relax_binaries:
            problem = problem.relaxed()
        self.problem = problem
        self.c0 = problem.c.copy()
        self.session = SolverSession(problem, self.options.session_backend,
                                     NumericPolicy(mip_rel_gap=self.options.rel_gap), self.options.limits())
        self.last_x: np.ndarray | None = None
        self.solves = 0

    def local_step(self, trades: Mapping[tuple[str, str], np.ndarray],
                   duals: Mapping[tuple[str, str], np.ndarray]) -> dict[tuple[str, str], np.ndarray]:
        """Minimise local cost + dual term + proximal pull; return local trade copies."""
        c = self.c0.copy()
        center = np.zeros_like(c)
        for pair, idx in self._copy_idx.items():
            c[idx] += np.asarray(duals[pair]).ravel()
            center[idx] = np.asarray(trades[pair]).ravel()
        self.session.update(c=c, quad_center=center)
        sol = self.session.solve()
        self.solves += 1
        if sol.x is None or sol.status != OPTIMAL:
            raise SolverError(f"ADMM subproblem of hub {self.hub.id} failed: {sol.status}")
        self.last_x = sol.x
        n = self.grid.n_steps
        return {pair: sol.x[idx].reshape(4, n) for pair, idx in self._copy_idx.items()}

    def plan_with(self, trades: Mapping[tuple[str, str], np.ndarray]) -> HubPlan:
        """Local plan with the consensus trades substituted, balances re-closed via grid and slack."""
        old = self.last_x
        x = old.copy()
        hv = self.hv
        for pair, idx in self._copy_idx.items():
            x[idx] = np.asarray(trades[pair]).ravel()
        d_e = np.zeros(self.grid.n_steps)
        d_h = np.zeros(self.grid.n_steps)
        for th in hv.trades:
            delta = lambda idx: x[idx] - old[idx]
            d_e += th.zeta_e * delta(th.import_e) - delta(th.export_e)
            d_h += th.zeta_h * delta(th.import_h) - delta(th.export_h)
        net = x[hv.idx["P_in"]] - x[hv.idx["P_out"]] - d_e
        x[hv.idx["P_in"]] = np.maximum(net, 0.0)
        x[hv.idx["P_out"]] = np.maximum(-net, 0.0)
        slack = x[hv.idx["heat_surplus"]] - x[hv.idx["heat_deficit"]] + d_h
        x[hv.idx["heat_surplus"]] = np.maximum(slack, 0.0)
        x[hv.idx["heat_deficit"]] = np.maximum(-slack, 0.0)
        return _hub_plan(hv, x, self.tariffs, self.grid, self.penalty, self.problem)


def admm_local_step(hub: HubSpec, network: NetworkSpec, grid: TimeGrid, forecast: Forecast,
                    tariffs: TariffPath, trades, duals, rho: float, state: HubState | None = None,
                    options: SolveOptions | None = None):
    """One-shot local ADMM solve; returns (local plan, local trade copies)."""
    agent = HubAgent(hub, network, grid, forecast, tariffs, rho, state, options)
    copies = agent.local_step(trades, duals)
    return agent.plan_with(copies), copies


@dataclass
class WarmStart:
    trades: dict[tuple[str, str], np.ndarray]
    duals: dict[tuple[tuple[str, str], str], np.ndarray]


def shift_warm_start(state: AdmmState, grid: TimeGrid) -> WarmStart:
    """Re-index final trades and duals one controller period forward.

    Steps that no old step maps to hold the value of the preceding new step.
    """
    mapping = shift_map(grid)
    n = grid.n_steps

    def shift(arr: np.ndarray) -> np.ndarray:
        out = np.zeros_like(arr)
        filled = np.zeros(n, dtype=bool)
        for old, new in mapping.items():
            out[:, new] = arr[:, old]
            filled[new] = True
        for k in range(n):
            if not filled[k]:
                out[:, k] = out[:, k - 1] if k > 0 else arr[:, min(1, n - 1)]
        return out

    return WarmStart({p: shift(v) for p, v in state.trades.items()},
                     {k: shift(v) for k, v in state.duals.items()})


def solve_dmpc(network: NetworkSpec, grid: TimeGrid, forecasts: Mapping[str, Forecast],
               tariffs: TariffPath, states: Mapping[str, HubState] | None = None,
               params: AdmmParams | None = None, warm: WarmStart | None = None,
               options: SolveOptions | None = None, fabric: MessageFabric | None = None):
    """Consensus ADMM over the hub agents; returns (plan, final AdmmState).

    Stops when both residual norms are <= eps, at ``h_max`` rounds, or at the
    wall-clock cap. A non-converged result applies the last consensus average
    and is flagged through ``plan.converged``.
    """
    params = params or AdmmParams()
    params.validate()
    states = states or {}
    t0 = time.perf_counter()
    fabric = fabric if fabric is not None else MessageFabric()
    pairs = [p for p in network.pairs if network.links[p].connected]
    n = grid.n_steps
    state = AdmmState.zeros(pairs, n, params.rho)
    if warm is not None:
        for p in pairs:
            if p in warm.trades:
                state.trades[p] = np.array(warm.trades[p], dtype=float)
            for h in p:
                if (p, h) in warm.duals:
                    state.duals[(p, h)] = np.array(warm.duals[(p, h)], dtype=float)
    agents = {hub.id: HubAgent(hub, network, grid, forecasts[hub.id], tariffs, params.rho,
                               states.get(hub.id), options) for hub in network.hubs}
    while True:
        rnd = state.iteration + 1
        for hub_id, agent in agents.items():
            copies = agent.local_step(state.trades, state.duals_for(hub_id))
            for pair, copy in copies.items():
                other = pair[1] if pair[0] == hub_id else pair[0]
                fabric.send(rnd, hub_id, other, pair, copy)
        reports = {}
        for hub_id, agent in agents.items():
            # each hub holds its own copies and the partner's received copy
            for msg in fabric.receive(rnd, hub_id):
                reports[(msg.pair, msg.sender)] = msg.payload
        state = admm_round(state, reports)
        if state.primal_residual <= params.eps and state.dual_residual <= params.eps:
            state.converged = True
            break
        if state.iteration >= params.h_max or time.perf_counter() - t0 >= params.max_seconds:
            break
    hubs = {h: agent.plan_with(state.trades) for h, agent in agents.items()}
    trades = {p: np.zeros((4, n)) for p in network.pairs}
    trades.update({p: state.trades[p].copy() for p in pairs})
    objective = float(sum(hp.cost.sum() + hp.penalty.sum() for hp in hubs.values()))
    plan = DispatchPlan(grid, hubs, trades, objective, OPTIMAL, time.perf_counter() - t0,
                        state.iteration, state.primal_residual, state.dual_residual, state.converged,
                        n_variables=sum(a.problem.n_vars for a in agents.values()))
    return plan, state

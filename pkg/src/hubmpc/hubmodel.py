"""Energy hub device models as sparse MILP fragments, plus point-wise plant physics.

Units: power kW, energy kWh, time h (step durations come from the grid in
minutes and are converted), prices CHF/kWh.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .milp import EQ, GE, LE, ProblemBuilder
from .timegrid import TimeGrid

SHARE_TOL = 1e-9
GB_SEGMENTS = 4


# ------------------------------------------------------------------ parameters

def _check(cond: bool, msg: str, errors: list[str] | None):
    if not cond:
        if errors is None:
            raise ConfigError(msg)
        errors.append(msg)


@dataclass(frozen=True)
class PvParams:
    eta: float
    area: float
    p_min: float = 0.0
    p_max: float = math.inf

    def validate(self, where: str = "pv", errors=None):
        _check(0 < self.eta <= 1, f"{where}.eta must be in (0, 1], got {self.eta}", errors)
        _check(self.area > 0, f"{where}.area must be positive, got {self.area}", errors)
        _check(0 <= self.p_min <= self.p_max, f"{where}: need 0 <= p_min <= p_max", errors)

    def available(self, irradiance):
        """Output for irradiance in kW/m2, clipped to the converter rating."""
        return np.clip(self.eta * np.asarray(irradiance, dtype=float) * self.area, self.p_min, self.p_max)


@dataclass(frozen=True)
class StParams:
    eta: float
    area: float
    alpha_p: float
    alpha_q: float
    p_min: float = 0.0
    p_max: float = math.inf
    allow_share_mismatch: bool = False

    def validate(self, where: str = "st", errors=None):
        _check(0 < self.eta <= 1, f"{where}.eta must be in (0, 1], got {self.eta}", errors)
        _check(self.area > 0, f"{where}.area must be positive, got {self.area}", errors)
        _check(0 <= self.p_min <= self.p_max, f"{where}: need 0 <= p_min <= p_max", errors)
        _check(self.alpha_p >= 0 and self.alpha_q >= 0, f"{where}: shares must be nonnegative", errors)
        if not self.allow_share_mismatch:
            _check(abs(self.alpha_p + self.alpha_q - 1.0) <= SHARE_TOL,
                   f"{where}: shares must sum to 1 (alpha_p={self.alpha_p}, alpha_q={self.alpha_q})", errors)

    def available(self, irradiance):
        """(electrical, thermal) output; both shares scale down together when clipped."""
        gross = self.eta * np.asarray(irradiance, dtype=float) * self.area
        p = gross * self.alpha_p
        p_clip = np.clip(p, self.p_min, self.p_max)
        scale = np.divide(p_clip, p, out=np.ones_like(p), where=p > 0)
        return p_clip, gross * self.alpha_q * scale


@dataclass(frozen=True)
class HpParams:
    cop: float
    q_min: float = 0.0
    q_max: float = math.inf

    def validate(self, where: str = "hp", errors=None):
        _check(self.cop > 0, f"{where}.cop must be positive", errors)
        _check(0 <= self.q_min <= self.q_max, f"{where}: need 0 <= q_min <= q_max", errors)


@dataclass(frozen=True)
class GbParams:
    """Boiler with part-load efficiencies for the 0-25/25-50/50-75/75-100 % load bands."""

    eta_segments: tuple[float, float, float, float]
    q_min: float = 0.0
    q_max: float = math.inf

    def validate(self, where: str = "gb", errors=None):
        _check(len(self.eta_segments) == GB_SEGMENTS, f"{where}: need 4 segment efficiencies", errors)
        _check(all(0 < e <= 1 for e in self.eta_segments), f"{where}: efficiencies must be in (0, 1]", errors)
        _check(0 <= self.q_min <= self.q_max and math.isfinite(self.q_max),
               f"{where}: need 0 <= q_min <= q_max < inf", errors)

    def segment(self, q: float) -> int:
        """0-based load band index for heat output ``q`` (top band includes q_max)."""
        frac = q / self.q_max
        return min(int(frac * GB_SEGMENTS), GB_SEGMENTS - 1)

    def fuel(self, q: float) -> float:
        return q / self.eta_segments[self.segment(q)] if q > 0 else 0.0


@dataclass(frozen=True)
class ChpParams:
    eta: float
    p_vertices: tuple[float, float, float, float]
    q_vertices: tuple[float, float, float, float]
    ramp_up: float = math.inf          # kW per hour
    ramp_down: float = math.inf
    min_up_h: float = 0.0
    min_down_h: float = 0.0

    def validate(self, where: str = "chp", errors=None):
        _check(0 < self.eta <= 1, f"{where}.eta must be in (0, 1]", errors)
        _check(len(self.p_vertices) == 4 and len(self.q_vertices) == 4, f"{where}: need 4 vertices", errors)
        _check(all(v >= 0 for v in (*self.p_vertices, *self.q_vertices)), f"{where}: vertices must be >= 0", errors)
        _check(max(self.p_vertices) > 0, f"{where}: polytope has no electrical output", errors)
        _check(min(self.ramp_up, self.ramp_down, self.min_up_h, self.min_down_h) >= 0,
               f"{where}: ramp limits and minimum times must be nonnegative", errors)

    @property
    def p_max(self) -> float:
        return max(self.p_vertices)

    @property
    def q_max(self) -> float:
        return max(self.q_vertices)


@dataclass(frozen=True)
class MchpParams:
    eta: float
    alpha_p: float
    alpha_q: float
    p_min: float = 0.0
    p_max: float = math.inf
    allow_share_mismatch: bool = False

    def validate(self, where: str = "mchp", errors=None):
        _check(0 < self.eta <= 1, f"{where}.eta must be in (0, 1]", errors)
        _check(0 <= self.p_min <= self.p_max, f"{where}: need 0 <= p_min <= p_max", errors)
        _check(self.alpha_p > 0 and self.alpha_q >= 0, f"{where}: shares must be positive", errors)
        if not self.allow_share_mismatch:
            _check(abs(self.alpha_p + self.alpha_q - 1.0) <= SHARE_TOL,
                   f"{where}: shares must sum to 1 (alpha_p={self.alpha_p}, alpha_q={self.alpha_q})", errors)


@dataclass(frozen=True)
class StorageParams:
    """Battery (kW/kWh) or hot-water tank; ``gamma`` is the standby retention per hour."""

    gamma: float
    eta: float
    e_min: float
    e_max: float
    p_max: float
    e0: float | None = None

    def validate(self, where: str = "storage", errors=None):
        _check(0 < self.gamma <= 1, f"{where}.gamma must be in (0, 1]", errors)
        _check(0 < self.eta <= 1, f"{where}.eta must be in (0, 1]", errors)
        _check(self.e_min <= self.e_max, f"{where}: need e_min <= e_max", errors)
        _check(self.p_max >= 0, f"{where}.p_max must be nonnegative", errors)
        _check(self.e_min <= self.initial <= self.e_max, f"{where}: e0 outside [e_min, e_max]", errors)

    @property
    def initial(self) -> float:
        return 0.5 * (self.e_min + self.e_max) if self.e0 is None else self.e0

    def step(self, e: float, charge: float, discharge: float, dt_h: float) -> float:
        return self.gamma ** dt_h * e + dt_h * (self.eta * charge - discharge / self.eta)


@dataclass(frozen=True)
class HubSpec:
    id: str
    pv: PvParams | None = None
    st: StParams | None = None
    hp: HpParams | None = None
    gb: GbParams | None = None
    chp: ChpParams | None = None
    mchp: MchpParams | None = None
    es: StorageParams | None = None
    ts: StorageParams | None = None

    DEVICES = ("pv", "st", "hp", "gb", "chp", "mchp", "es", "ts")

    def validate(self, errors=None):
        for name in self.DEVICES:
            dev = getattr(self, name)
            if dev is not None:
                dev.validate(f"hubs.{self.id}.{name}", errors)


@dataclass(frozen=True)
class Link:
    kappa_e: float = 0.0
    kappa_h: float = 0.0
    zeta_e: float = 1.0
    zeta_h: float = 1.0

    @property
    def connected(self) -> bool:
        return self.kappa_e > 0 or self.kappa_h > 0


@dataclass(frozen=True)
class Tariffs:
    c_in_peak: float = 0.27
    c_in_offpeak: float = 0.22
    c_out: float = 0.12
    c_gas: float = 0.115
    c_tr: float = 0.02
    c_tr_heat: float = 0.0
    peak_start_h: float = 7.0
    peak_end_h: float = 20.0

    def c_in_at(self, t_min) -> np.ndarray:
        """Import price at absolute times (minutes since simulation start, day-periodic)."""
        hod = (np.asarray(t_min, dtype=float) / 60.0) % 24.0
        peak = (hod >= self.peak_start_h) & (hod < self.peak_end_h)
        return np.where(peak, self.c_in_peak, self.c_in_offpeak)


@dataclass(frozen=True)
class NetworkSpec:
    hubs: tuple[HubSpec, ...]
    links: Mapping[tuple[str, str], Link] = field(default_factory=dict)
    tariffs: Tariffs = field(default_factory=Tariffs)
    heat_slack_penalty: float = 10.0

    def __post_init__(self):
        norm = {}
        for (a, b), link in dict(self.links).items():
            key = pair_key(a, b, self.hub_ids)
            norm[key] = link
        object.__setattr__(self, "links", norm)

    @property
    def hub_ids(self) -> list[str]:
        return [h.id for h in self.hubs]

    def hub(self, hub_id: str) -> HubSpec:
        for h in self.hubs:
            if h.id == hub_id:
                return h
        raise KeyError(hub_id)

    @property
    def pairs(self) -> list[tuple[str, str]]:
        """Configured pairs in a fixed order (hub-list order of both ends)."""
        order = {h: i for i, h in enumerate(self.hub_ids)}
        return sorted(self.links, key=lambda p: (order[p[0]], order[p[1]]))

    def neighbors(self, hub_id: str) -> list[tuple[str, str]]:
        """Connected pairs (kappa > 0 on some carrier) that involve ``hub_id``."""
        return [p for p in self.pairs if hub_id in p and self.links[p].connected]

    def with_links(self, **changes) -> "NetworkSpec":
        return replace(self, links={p: replace(l, **changes) for p, l in self.links.items()})

    def validate(self, errors=None):
        ids = self.hub_ids
        _check(len(ids) == len(set(ids)), "hub ids must be unique", errors)
        for h in self.hubs:
            h.validate(errors)
        for (a, b), l in self.links.items():
            w = f"links.{a}-{b}"
            _check(l.kappa_e >= 0 and l.kappa_h >= 0, f"{w}: kappa must be nonnegative", errors)
            _check(0 < l.zeta_e <= 1 and 0 < l.zeta_h <= 1, f"{w}: zeta must be in (0, 1]", errors)
        _check(self.heat_slack_penalty >= 0, "heat_slack_penalty must be nonnegative", errors)


def pair_key(a: str, b: str, order: list[str] | None = None) -> tuple[str, str]:
    if a == b:
        raise ConfigError(f"link from hub {a!r} to itself")
    if order is not None:
        if a not in order or b not in order:
            raise ConfigError(f"link {a}-{b} references an unknown hub")
        return (a, b) if order.index(a) < order.index(b) else (b, a)
    return (a, b) if a < b else (b, a)


# --------------------------------------------------------- state and forecasts

@dataclass
class HubState:
    """Plant state carried across controller invocations."""

    e_es: float | None = None
    e_ts: float | None = None
    chp_on: bool = False
    chp_hours_in_state: float = math.inf
    chp_power: float = 0.0

    @classmethod
    def initial(cls, hub: HubSpec) -> "HubState":
        st = cls()
        if hub.es is not None:
            st.e_es = hub.es.initial
        if hub.ts is not None:
            st.e_ts = hub.ts.initial
        if hub.chp is not None:
            # start "off for t_down hours": free to start immediately
            st.chp_hours_in_state = hub.chp.min_down_h
        return st

    def copy(self) -> "HubState":
        return replace(self)


@dataclass
class Forecast:
    """Per-step electric load, heat load (kW) and irradiance (kW/m2)."""

    electric: np.ndarray
    heat: np.ndarray
    irradiance: np.ndarray

    def __post_init__(self):
        self.electric = np.asarray(self.electric, dtype=float)
        self.heat = np.asarray(self.heat, dtype=float)
        self.irradiance = np.asarray(self.irradiance, dtype=float)

    def __len__(self):
        return len(self.electric)


@dataclass
class TariffPath:
    """Per-step prices over a grid."""

    c_in: np.ndarray
    c_out: np.ndarray
    c_gas: np.ndarray
    c_tr: np.ndarray
    c_tr_heat: np.ndarray

    @classmethod
    def sample(cls, tariffs: Tariffs, start_times_min) -> "TariffPath":
        t = np.asarray(start_times_min, dtype=float)
        full = lambda v: np.full(len(t), float(v))
        return cls(tariffs.c_in_at(t), full(tariffs.c_out), full(tariffs.c_gas),
                   full(tariffs.c_tr), full(tariffs.c_tr_heat))

    def at(self, k: int) -> "TariffPath":
        return TariffPath(*(np.atleast_1d(getattr(self, f)[k]) for f in
                            ("c_in", "c_out", "c_gas", "c_tr", "c_tr_heat")))


# ------------------------------------------------------------ MILP fragments

@dataclass
class TradeHandles:
    """Trade variables seen from one hub of a pair: what it sends and receives."""

    pair: tuple[str, str]
    export_e: np.ndarray
    import_e: np.ndarray
    export_h: np.ndarray
    import_h: np.ndarray
    zeta_e: float
    zeta_h: float


@dataclass
class PairVars:
    """Global trade variables of an unordered pair (a, b), in the order
    [P_ab, P_ba, Q_ab, Q_ba]."""

    pair: tuple[str, str]
    p_ab: np.ndarray
    p_ba: np.ndarray
    q_ab: np.ndarray
    q_ba: np.ndarray

    @property
    def components(self) -> list[np.ndarray]:
        return [self.p_ab, self.p_ba, self.q_ab, self.q_ba]

    def stacked(self) -> np.ndarray:
        return np.concatenate(self.components)

    def handles_for(self, hub_id: str, link: Link) -> TradeHandles:
        a, b = self.pair
        if hub_id == a:
            return TradeHandles(self.pair, self.p_ab, self.p_ba, self.q_ab, self.q_ba, link.zeta_e, link.zeta_h)
        if hub_id == b:
            return TradeHandles(self.pair, self.p_ba, self.p_ab, self.q_ba, self.q_ab, link.zeta_e, link.zeta_h)
        raise KeyError(hub_id)


TRADE_COMPONENTS = ("P_ab", "P_ba", "Q_ab", "Q_ba")


def add_trade_vars(builder: ProblemBuilder, pair: tuple[str, str], link: Link, n: int,
                   prefix: str = "") -> PairVars:
    a, b = pair
    tag = f"{prefix}{a}_{b}"
    return PairVars(
        pair,
        builder.add_vars(f"P_tr[{a}->{b}]{tag and '@' + prefix}", n, 0.0, link.kappa_e),
        builder.add_vars(f"P_tr[{b}->{a}]{tag and '@' + prefix}", n, 0.0, link.kappa_e),
        builder.add_vars(f"Q_tr[{a}->{b}]{tag and '@' + prefix}", n, 0.0, link.kappa_h),
        builder.add_vars(f"Q_tr[{b}->{a}]{tag and '@' + prefix}", n, 0.0, link.kappa_h),
    )


def build_coupling_constraints(builder: ProblemBuilder, network: NetworkSpec, grid: TimeGrid) -> dict:
    """Global trade variables with line limits 0 <= P_tr <= kappa_e, 0 <= Q_tr <= kappa_h.

    A configured pair with kappa = 0 gets variables fixed to zero; pairs not
    configured get no variables at all.
    """
    n = grid.n_steps
    return {p: add_trade_vars(builder, p, network.links[p], n) for p in network.pairs}


@dataclass
class HubVars:
    hub_id: str
    n: int
    idx: dict[str, np.ndarray] = field(default_factory=dict)
    trades: list[TradeHandles] = field(default_factory=list)
    rows: dict[str, np.ndarray] = field(default_factory=dict)

    def values(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {k: np.asarray(x[v]) for k, v in self.idx.items()}


def _chp_history_bounds(chp: ChpParams, state: HubState, offsets_h: np.ndarray):
    """Steps whose commitment is pinned by the minimum up/down time carried from the plant."""
    if state.chp_on:
        remaining = chp.min_up_h - state.chp_hours_in_state
        return offsets_h < remaining - 1e-9, 1.0
    remaining = chp.min_down_h - state.chp_hours_in_state
    return offsets_h < remaining - 1e-9, 0.0


def _window_rows(offsets_h: np.ndarray, length_h: float):
    """For each k, the steps j <= k that started less than ``length_h`` before step k."""
    rows, cols = [], []
    for k in range(len(offsets_h)):
        j = np.flatnonzero((offsets_h[: k + 1] > offsets_h[k] - length_h + 1e-9))
        rows.append(np.full(len(j), k))
        cols.append(j)
    return np.concatenate(rows), np.concatenate(cols)


def build_hub_constraints(builder: ProblemBuilder, hub: HubSpec, grid: TimeGrid, forecast: Forecast,
                          state: HubState | None = None, trades: list[TradeHandles] | None = None) -> HubVars:
    """Emit all device, storage and balance constraints of one hub over ``grid``."""
    n = grid.n_steps
    if len(forecast) != n or len(forecast.heat) != n or len(forecast.irradiance) != n:
        raise ConfigError(f"hub {hub.id}: forecast length {len(forecast)} != grid length {n}")
    for name in ("electric", "heat", "irradiance"):
        if not np.all(np.isfinite(getattr(forecast, name))):
            raise ConfigError(f"hub {hub.id}: non-finite {name} forecast")
    state = state or HubState.initial(hub)
    trades = trades or []
    dt = np.array(grid.durations_h)
    off_h = np.array(grid.offsets_min) / 60.0
    hv = HubVars(hub.id, n, trades=trades)
    v = lambda name, lb=0.0, ub=np.inf, binary=False: builder.add_vars(f"{hub.id}.{name}", n, lb, ub, binary)

    elec_gen: list[tuple] = []     # (coef, idx) terms entering the electrical balance
    heat_gen: list[tuple] = []
    fuels: list[np.ndarray] = []

    if hub.pv is not None:
        p = hv.idx["P_pv"] = v("P_pv", hub.pv.p_min, hub.pv.p_max)
        builder.add_rows([(1.0, p)], EQ, hub.pv.available(forecast.irradiance))
        elec_gen.append((1.0, p))

    if hub.st is not None:
        st = hub.st
        p = hv.idx["P_st"] = v("P_st", st.p_min, st.p_max)
        q = hv.idx["Q_st"] = v("Q_st")
        p_av, q_av = st.available(forecast.irradiance)
        builder.add_rows([(1.0, p)], EQ, p_av)
        builder.add_rows([(1.0, q)], EQ, q_av)
        elec_gen.append((1.0, p))
        heat_gen.append((1.0, q))

    if hub.hp is not None:
        p = hv.idx["P_hp"] = v("P_hp")
        q = hv.idx["Q_hp"] = v("Q_hp", hub.hp.q_min, hub.hp.q_max)
        builder.add_rows([(1.0, q), (-hub.hp.cop, p)], EQ, 0.0)
        elec_gen.append((-1.0, p))
        heat_gen.append((1.0, q))

    if hub.gb is not None:
        gb = hub.gb
        z = [v(f"z_gb{s + 1}", 0.0, 1.0, True) for s in range(GB_SEGMENTS)]
        qs = [v(f"Q_gb{s + 1}", 0.0, gb.q_max) for s in range(GB_SEGMENTS)]
        q = hv.idx["Q_gb"] = v("Q_gb", 0.0, gb.q_max)
        f = hv.idx["F_gb"] = v("F_gb")
        for s in range(GB_SEGMENTS):
            hv.idx[f"z_gb{s + 1}"] = z[s]
            builder.add_rows([(1.0, qs[s]), (-s / GB_SEGMENTS * gb.q_max, z[s])], GE, 0.0)
            builder.add_rows([(1.0, qs[s]), (-(s + 1) / GB_SEGMENTS * gb.q_max, z[s])], LE, 0.0)
        builder.add_rows([(1.0, zs) for zs in z], LE, 1.0)
        builder.add_rows([(1.0, q)] + [(-1.0, x) for x in qs], EQ, 0.0)
        builder.add_rows([(1.0, f)] + [(-1.0 / gb.eta_segments[s], qs[s]) for s in range(GB_SEGMENTS)], EQ, 0.0)
        if gb.q_min > 0:
            builder.add_rows([(1.0, q)] + [(-gb.q_min, zs) for zs in z], GE, 0.0)
        heat_gen.append((1.0, q))
        fuels.append(f)

    if hub.chp is not None:
        chp = hub.chp
        w = [v(f"w_chp{'ABCD'[j]}", 0.0, 1.0) for j in range(4)]
        b = hv.idx["b_chp"] = v("b_chp", 0.0, 1.0, True)
        p = hv.idx["P_chp"] = v("P_chp", 0.0, chp.p_max)
        q = hv.idx["Q_chp"] = v("Q_chp", 0.0, chp.q_max)
        f = hv.idx["F_chp"] = v("F_chp")
        for j in range(4):
            hv.idx[f"w_chp{'ABCD'[j]}"] = w[j]
        builder.add_rows([(1.0, p)] + [(-chp.p_vertices[j], w[j]) for j in range(4)], EQ, 0.0)
        builder.add_rows([(1.0, q)] + [(-chp.q_vertices[j], w[j]) for j in range(4)], EQ, 0.0)
        builder.add_rows([(1.0, p), (-chp.eta, f)], EQ, 0.0)
        builder.add_rows([(1.0, wj) for wj in w] + [(-1.0, b)], EQ, 0.0)
        _chp_commitment(builder, hv, chp, state, dt, off_h)
        elec_gen.append((1.0, p))
        heat_gen.append((1.0, q))
        fuels.append(f)

    if hub.mchp is not None:
        m = hub.mchp
        out = hv.idx["Pout_mchp"] = v("Pout_mchp")
        p = hv.idx["P_mchp"] = v("P_mchp", m.p_min, m.p_max)
        q = hv.idx["Q_mchp"] = v("Q_mchp")
        f = hv.idx["F_mchp"] = v("F_mchp")
        builder.add_rows([(1.0, p), (-m.alpha_p, out)], EQ, 0.0)
        builder.add_rows([(1.0, q), (-m.alpha_q, out)], EQ, 0.0)
        builder.add_rows([(1.0, p), (-m.eta, f)], EQ, 0.0)
        elec_gen.append((1.0, p))
        heat_gen.append((1.0, q))
        fuels.append(f)

    for key, carrier, gen in (("es", "P", elec_gen), ("ts", "Q", heat_gen)):
        sto: StorageParams | None = getattr(hub, key)
        if sto is None:
            continue
        ch = hv.idx[f"{carrier}_ch"] = v(f"{carrier}_ch_{key}", 0.0, sto.p_max)
        dc = hv.idx[f"{carrier}_dc"] = v(f"{carrier}_dc_{key}", 0.0, sto.p_max)
        e = hv.idx[f"E_{key}"] = v(f"E_{key}", sto.e_min, sto.e_max)
        e0 = getattr(state, f"e_{key}")
        e0 = sto.initial if e0 is None else e0
        decay = sto.gamma ** dt
        # E[k] - decay_k E[k-1] - dt_k eta ch[k] + dt_k/eta dc[k] = 0, with E[-1] = e0
        rows_k = np.arange(n)
        cols = [e, ch, dc]
        vals = [np.ones(n), -dt * sto.eta, dt / sto.eta]
        rr = [rows_k, rows_k, rows_k]
        if n > 1:
            rr.append(rows_k[1:])
            cols.append(e[:-1])
            vals.append(-decay[1:])
        rhs = np.zeros(n)
        rhs[0] = decay[0] * e0
        builder.add_row_block(np.concatenate(rr), np.concatenate(cols), np.concatenate(vals), n, EQ, rhs)
        gen.append((1.0, dc))
        gen.append((-1.0, ch))

    p_in = hv.idx["P_in"] = v("P_in")
    p_out = hv.idx["P_out"] = v("P_out")
    s_sur = hv.idx["heat_surplus"] = v("heat_surplus")
    s_def = hv.idx["heat_deficit"] = v("heat_deficit")
    if fuels:
        f_g = hv.idx["F_g"] = v("F_g")
        builder.add_rows([(1.0, f_g)] + [(-1.0, f) for f in fuels], EQ, 0.0)

    e_terms = list(elec_gen) + [(1.0, p_in), (-1.0, p_out)]
    h_terms = list(heat_gen) + [(-1.0, s_sur), (1.0, s_def)]
    for th in trades:
        e_terms += [(th.zeta_e, th.import_e), (-1.0, th.export_e)]
        h_terms += [(th.zeta_h, th.import_h), (-1.0, th.export_h)]
    hv.rows["electric"] = builder.add_rows(e_terms, EQ, forecast.electric)
    hv.rows["heat"] = builder.add_rows(h_terms, EQ, forecast.heat)
    return hv


def _chp_commitment(builder: ProblemBuilder, hv: HubVars, chp: ChpParams, state: HubState,
                    dt: np.ndarray, off_h: np.ndarray) -> None:
    n = len(dt)
    p, b = hv.idx["P_chp"], hv.idx["b_chp"]
    big = chp.p_max
    b_prev = 1.0 if state.chp_on else 0.0
    p_prev = state.chp_power if state.chp_on else 0.0

    # ramping while on in both steps; start-up and shut-down are exempt
    if math.isfinite(chp.ramp_up):
        rhs = chp.ramp_up * dt + big
        rhs[0] += p_prev - big * b_prev
        if n > 1:
            rows = np.arange(n)
            builder.add_row_block(
                np.concatenate([rows, rows[1:], rows[1:]]),
                np.concatenate([p, p[:-1], b[:-1]]),
                np.concatenate([np.ones(n), -np.ones(n - 1), big * np.ones(n - 1)]), n, LE, rhs)
        else:
            builder.add_rows([(1.0, p)], LE, rhs)
    if math.isfinite(chp.ramp_down):
        rhs = chp.ramp_down * dt + big
        rhs[0] -= p_prev
        rows = np.arange(n)
        builder.add_row_block(
            np.concatenate([rows, rows[1:], rows]),
            np.concatenate([p, p[:-1], b]),
            np.concatenate([-np.ones(n), np.ones(n - 1), big * np.ones(n)]), n, LE, rhs)

    # minimum up/down times with start-up (u) and shut-down (v) indicators
    if chp.min_up_h > 0 or chp.min_down_h > 0:
        u = hv.idx["u_chp"] = builder.add_vars(f"{hv.hub_id}.u_chp", n, 0.0, 1.0)
        w = hv.idx["v_chp"] = builder.add_vars(f"{hv.hub_id}.v_chp", n, 0.0, 1.0)
        rows = np.arange(n)
        rhs = np.zeros(n)
        rhs[0] = b_prev
        builder.add_row_block(
            np.concatenate([rows, rows[1:], rows, rows]),
            np.concatenate([b, b[:-1], u, w]),
            np.concatenate([np.ones(n), -np.ones(n - 1), -np.ones(n), np.ones(n)]), n, EQ, rhs)
        if chp.min_up_h > 0:
            r, c = _window_rows(off_h, chp.min_up_h)
            builder.add_row_block(np.concatenate([r, rows]), np.concatenate([u[c], b]),
                                  np.concatenate([np.ones(len(c)), -np.ones(n)]), n, LE, 0.0)
        if chp.min_down_h > 0:
            r, c = _window_rows(off_h, chp.min_down_h)
            builder.add_row_block(np.concatenate([r, rows]), np.concatenate([w[c], b]),
                                  np.concatenate([np.ones(len(c)), np.ones(n)]), n, LE, 1.0)
        pinned, val = _chp_history_bounds(chp, state, off_h)
        if np.any(pinned):
            builder.set_bounds(b[pinned], lb=val, ub=val)


def hub_stage_cost(builder: ProblemBuilder, hv: HubVars, tariffs: TariffPath, grid: TimeGrid,
                   heat_penalty: float, coupled: bool = True) -> None:
    """Objective fragment: energy purchases, feed-in revenue, gas, import fees, heat slack."""
    dt = np.array(grid.durations_h)
    builder.add_cost(hv.idx["P_in"], dt * tariffs.c_in)
    builder.add_cost(hv.idx["P_out"], -dt * tariffs.c_out)
    if "F_g" in hv.idx:
        builder.add_cost(hv.idx["F_g"], dt * tariffs.c_gas)
    builder.add_cost(hv.idx["heat_surplus"], dt * heat_penalty)
    builder.add_cost(hv.idx["heat_deficit"], dt * heat_penalty)
    if coupled:
        for th in hv.trades:
            builder.add_cost(th.import_e, dt * tariffs.c_tr)
            if np.any(tariffs.c_tr_heat):
                builder.add_cost(th.import_h, dt * tariffs.c_tr_heat)


def stage_cost(p_in, p_out, f_gas, import_e, import_h, tariffs: TariffPath, dt_h, heat_slack=0.0,
               heat_penalty: float = 0.0):
    """Monetary cost (CHF) of one or more steps; arrays broadcast elementwise."""
    return np.asarray(dt_h) * (tariffs.c_in * p_in - tariffs.c_out * p_out + tariffs.c_gas * f_gas
                               + tariffs.c_tr * import_e + tariffs.c_tr_heat * import_h
                               + heat_penalty * np.asarray(heat_slack))


# ------------------------------------------------------------------ the plant

SETPOINT_KEYS = ("P_chp", "Q_chp", "F_chp", "b_chp", "P_mchp", "Q_mchp", "F_mchp", "P_hp", "Q_hp",
                 "Q_gb", "F_gb", "P_ch", "P_dc", "Q_ch", "Q_dc")


@dataclass
class PlantRecord:
    p_in: float
    p_out: float
    gas: float
    heat_surplus: float
    heat_deficit: float
    e_es: float | None
    e_ts: float | None
    cost: float
    generation_e: float
    charge_e: float
    discharge_e: float
    import_e: float          # after transfer losses
    export_e: float
    import_e_sent: float     # before losses, the fee base
    import_h: float
    export_h: float
    import_h_sent: float
    load_e: float
    load_h: float
    state: HubState

    @property
    def electric_residual(self) -> float:
        inflow = self.p_in + self.generation_e + self.discharge_e + self.import_e
        outflow = self.load_e + self.charge_e + self.export_e + self.p_out
        return inflow - outflow


def _saturate(sto: StorageParams, e: float, ch: float, dc: float, dt_h: float):
    """Adjust charge/discharge so the storage stays within its energy bounds."""
    decayed = sto.gamma ** dt_h * e
    nxt = decayed + dt_h * (sto.eta * ch - dc / sto.eta)
    if nxt > sto.e_max:
        ch = max(0.0, ch - (nxt - sto.e_max) / (dt_h * sto.eta))
        nxt = decayed + dt_h * (sto.eta * ch - dc / sto.eta)
        if nxt > sto.e_max:
            dc = min(sto.p_max, dc + (nxt - sto.e_max) * sto.eta / dt_h)
    elif nxt < sto.e_min:
        dc = max(0.0, dc - (sto.e_min - nxt) * sto.eta / dt_h)
        nxt = decayed + dt_h * (sto.eta * ch - dc / sto.eta)
        if nxt < sto.e_min:
            ch = min(sto.p_max, ch + (sto.e_min - nxt) / (dt_h * sto.eta))
    nxt = decayed + dt_h * (sto.eta * ch - dc / sto.eta)
    return ch, dc, min(max(nxt, sto.e_min), sto.e_max)


def evaluate_plant(hub: HubSpec, setpoints: Mapping[str, float], realized: Mapping[str, float],
                   dt_h: float, state: HubState, tariffs: TariffPath,
                   trades: list[tuple[float, float, float, float, float, float]] = ()) -> PlantRecord:
    """Apply held setpoints against realized demand for one plant step.

    ``realized`` holds ``electric``, ``heat`` and ``irradiance``. ``trades``
    lists, per connected pair, (export_e, import_e_sent, zeta_e, export_h,
    import_h_sent, zeta_h) in kW. The grid closes the electrical balance;
    heat mismatch becomes surplus or deficit.
    """
    sp_ = lambda k: float(setpoints.get(k, 0.0))
    gen_e = 0.0
    heat = 0.0
    gas = 0.0
    if hub.pv is not None:
        gen_e += float(hub.pv.available(realized["irradiance"]))
    if hub.st is not None:
        p, q = hub.st.available(realized["irradiance"])
        gen_e += float(p)
        heat += float(q)
    if hub.hp is not None:
        gen_e -= sp_("P_hp")
        heat += sp_("Q_hp")
    if hub.gb is not None:
        heat += sp_("Q_gb")
        gas += sp_("F_gb")
    if hub.chp is not None:
        gen_e += sp_("P_chp")
        heat += sp_("Q_chp")
        gas += sp_("F_chp")
    if hub.mchp is not None:
        gen_e += sp_("P_mchp")
        heat += sp_("Q_mchp")
        gas += sp_("F_mchp")

    new = state.copy()
    charge_e = discharge_e = 0.0
    if hub.es is not None:
        charge_e, discharge_e, new.e_es = _saturate(hub.es, state.e_es, sp_("P_ch"), sp_("P_dc"), dt_h)
    if hub.ts is not None:
        q_ch, q_dc, new.e_ts = _saturate(hub.ts, state.e_ts, sp_("Q_ch"), sp_("Q_dc"), dt_h)
        heat += q_dc - q_ch

    imp_e = exp_e = imp_e_sent = imp_h = exp_h = imp_h_sent = 0.0
    for export_e, import_e_sent, zeta_e, export_h, import_h_sent, zeta_h in trades:
        exp_e += export_e
        imp_e_sent += import_e_sent
        imp_e += zeta_e * import_e_sent
        exp_h += export_h
        imp_h_sent += import_h_sent
        imp_h += zeta_h * import_h_sent
    heat += imp_h - exp_h

    load_e, load_h = float(realized["electric"]), float(realized["heat"])
    net = load_e - (gen_e + discharge_e - charge_e + imp_e - exp_e)
    p_in, p_out = max(net, 0.0), max(-net, 0.0)
    diff = heat - load_h
    surplus, deficit = max(diff, 0.0), max(-diff, 0.0)

    if hub.chp is not None:
        on = sp_("b_chp") > 0.5
        if on == state.chp_on:
            new.chp_hours_in_state = state.chp_hours_in_state + dt_h
        else:
            new.chp_on, new.chp_hours_in_state = on, dt_h
        new.chp_power = sp_("P_chp")

    cost = float(stage_cost(p_in, p_out, gas, imp_e_sent, imp_h_sent, tariffs, dt_h)[0])
    return PlantRecord(p_in, p_out, gas, surplus, deficit, new.e_es, new.e_ts, cost, gen_e, charge_e,
                       discharge_e, imp_e, exp_e, imp_e_sent, imp_h, exp_h, imp_h_sent, load_e, load_h, new)

"""Scenario files, demand/weather profiles and the bundled three-hub benchmark.

Scenario files are YAML documents (``schema_version: 1``). Units are fixed:
kW, kWh, CHF/kWh, minutes, kW/m2 for irradiance, degC for ambient
temperature. See README for the full schema.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timedelta
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .errors import ConfigError
from .hubmodel import (
    ChpParams, GbParams, HpParams, HubSpec, Link, MchpParams, NetworkSpec, PvParams, StorageParams,
    StParams, Tariffs,
)
from .timegrid import TimeGrid, build_multi_horizon, build_uniform, named_schedule

SCHEMA_VERSION = 1
KINDS = ("electric", "heat", "irradiance", "tariff", "ambient")
HUB_SIGNALS = ("electric", "heat", "irradiance")

DEVICE_TYPES = {
    "pv": PvParams, "st": StParams, "hp": HpParams, "gb": GbParams, "chp": ChpParams,
    "mchp": MchpParams, "es": StorageParams, "ts": StorageParams,
}


# -------------------------------------------------------------------- profiles

@dataclass(frozen=True)
class Profile:
    name: str
    kind: str
    period_min: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def span_min(self) -> int:
        return self.period_min * len(self.values)

    def validate(self, where: str, errors: list[str]):
        if self.kind not in KINDS:
            errors.append(f"{where}.kind: unknown kind {self.kind!r} (expected one of {', '.join(KINDS)})")
        if self.period_min <= 0:
            errors.append(f"{where}.period_min must be positive")
        if not np.all(np.isfinite(self.values)):
            errors.append(f"{where}: non-finite values")
        elif self.kind != "ambient" and np.any(self.values < 0):
            errors.append(f"{where}: negative values not allowed for kind {self.kind}")

    def resample(self, period_min: int) -> np.ndarray:
        """Values at a finer (or equal) period by sample repetition."""
        if self.period_min % period_min:
            raise ConfigError(f"profile {self.name}: period {self.period_min} min is not a multiple "
                              f"of the plant step {period_min} min")
        return np.repeat(self.values, self.period_min // period_min)

    def __eq__(self, other):
        return (isinstance(other, Profile) and (self.name, self.kind, self.period_min)
                == (other.name, other.kind, other.period_min) and np.array_equal(self.values, other.values))


def _parse_float(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{where}: non-numeric value {text!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{where}: non-finite value {text!r}")
    return v


def ingest_csv_profile(path, kind: str, period_min: int | None = None, name: str | None = None) -> Profile:
    """Read a ``timestamp,value`` CSV (ISO timestamps) or a single value column.

    Timestamps must be evenly spaced; the spacing sets the period unless
    ``period_min`` is given, in which case they must agree. Single-column
    files need ``period_min``.
    """
    path = Path(path)
    if kind not in KINDS:
        raise ConfigError(f"unknown profile kind {kind!r}")
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise ConfigError(f"cannot read profile {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: empty profile")
    header = [c.strip().lower() for c in rows[0]]
    if header == ["timestamp", "value"]:
        body = rows[1:]
        stamps, values = [], []
        for i, r in enumerate(body, start=2):
            if len(r) != 2:
                raise ConfigError(f"{path}:{i}: expected 2 columns, got {len(r)}")
            try:
                stamps.append(datetime.fromisoformat(r[0].strip()))
            except ValueError:
                raise ConfigError(f"{path}:{i}: bad timestamp {r[0]!r}") from None
            values.append(_parse_float(r[1].strip(), f"{path}:{i}"))
        if len(stamps) < 2 and period_min is None:
            raise ConfigError(f"{path}: need at least two rows to infer the period")
        step = timedelta(minutes=period_min) if period_min else stamps[1] - stamps[0]
        if step <= timedelta(0):
            raise ConfigError(f"{path}: duplicate or decreasing timestamp at row 3 ({stamps[1]})")
        for i in range(1, len(stamps)):
            d = stamps[i] - stamps[i - 1]
            if d == step:
                continue
            if d <= timedelta(0):
                raise ConfigError(f"{path}:{i + 2}: duplicate or decreasing timestamp {stamps[i]}")
            raise ConfigError(f"{path}:{i + 2}: gap in timestamps, missing {stamps[i - 1] + step}")
        period = int(step.total_seconds() // 60)
        if step.total_seconds() != 60 * period:
            raise ConfigError(f"{path}: sample period {step} is not a whole number of minutes")
    else:
        if any(len(r) != 1 for r in rows):
            raise ConfigError(f"{path}: expected header 'timestamp,value' or a single value column")
        start = 1 if _is_header(rows[0][0]) else 0
        values = [_parse_float(r[0].strip(), f"{path}:{i + 1}") for i, r in enumerate(rows) if i >= start]
        if period_min is None:
            raise ConfigError(f"{path}: single-column profile needs period_min")
        period = period_min
    prof = Profile(name or path.stem, kind, int(period), np.array(values))
    errors: list[str] = []
    prof.validate(str(path), errors)
    if errors:
        raise ConfigError("; ".join(errors))
    return prof


def _is_header(cell: str) -> bool:
    try:
        float(cell)
        return False
    except ValueError:
        return True


def write_csv_profile(profile: Profile, path, start: datetime | None = None) -> None:
    start = start or datetime(2021, 1, 4)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "value"])
        for i, v in enumerate(profile.values):
            w.writerow([(start + timedelta(minutes=i * profile.period_min)).isoformat(), repr(float(v))])


# ------------------------------------------------------------ synthetic data

@dataclass(frozen=True)
class HubTemplate:
    """Shape parameters of the synthetic demand generator (kW)."""

    name: str
    el_base: float
    el_amp: float
    heat_base: float
    heat_amp: float
    heat_min: float = 0.0
    heat_max: float = math.inf
    weekend: float = 0.8
    noise: float = 0.05


TEMPLATES = {
    "hub1": HubTemplate("hub1", el_base=500.0, el_amp=200.0, heat_base=900.0, heat_amp=300.0,
                        heat_min=650.0, heat_max=1250.0),
    "hub2": HubTemplate("hub2", el_base=250.0, el_amp=100.0, heat_base=220.0, heat_amp=90.0,
                        heat_min=60.0, heat_max=330.0),
    "hub3": HubTemplate("hub3", el_base=60.0, el_amp=25.0, heat_base=34.0, heat_amp=12.0,
                        heat_min=18.0, heat_max=48.0),
}

I_PEAK = 0.8        # clear-sky irradiance peak, kW/m2
SUNRISE_H, SUNSET_H = 6.0, 20.0


def _template_code(name: str) -> int:
    return sum((i + 1) * ord(c) for i, c in enumerate(name))


def synth_weather(seed: int, days: int, period_min: int = 15) -> dict[str, np.ndarray]:
    """Irradiance (kW/m2) and ambient temperature (degC), shared by all hubs.

    Irradiance: I_PEAK * sin(pi (h - 6) / 14) between 06:00 and 20:00,
    times a per-day clearness in [0.6, 1] and up to three seeded cloud dips
    (Gaussian notches of depth <= 0.6, width 30-90 min). Ambient:
    8 + 3 u_d - 5 cos(2 pi (h - 3) / 24) with u_d a daily offset in [-1, 1].
    """
    if days < 1:
        raise ConfigError(f"days must be >= 1, got {days}")
    rng = np.random.default_rng([seed, 0])
    n_day = 24 * 60 // period_min
    h = (np.arange(n_day) + 0.5) * period_min / 60.0
    clear = np.where((h > SUNRISE_H) & (h < SUNSET_H),
                     np.sin(np.pi * (h - SUNRISE_H) / (SUNSET_H - SUNRISE_H)), 0.0)
    irr, amb = [], []
    for _ in range(days):
        k = rng.uniform(0.6, 1.0)
        shade = np.ones(n_day)
        for _ in range(rng.integers(0, 4)):
            c, w, depth = rng.uniform(8.0, 18.0), rng.uniform(0.5, 1.5), rng.uniform(0.2, 0.6)
            shade -= depth * np.exp(-0.5 * ((h - c) / (0.5 * w)) ** 2)
        irr.append(I_PEAK * k * clear * np.clip(shade, 0.0, 1.0))
        amb.append(8.0 + 3.0 * rng.uniform(-1, 1) - 5.0 * np.cos(2 * np.pi * (h - 3.0) / 24.0))
    return {"irradiance": np.concatenate(irr), "ambient": np.concatenate(amb)}


def synth_profiles(seed: int, days: int, template: HubTemplate | str,
                   period_min: int = 15) -> dict[str, np.ndarray]:
    """Seeded electric load, heat load, irradiance and ambient samples.

    Electric: base + amp * (0.6 s_m + 0.4 s_e) with morning/evening bumps
    s_m, s_e (Gaussians at 08:00 and 19:00), scaled by ``weekend`` on days
    5 and 6 of each week, times (1 + noise * N(0,1)). Heat: base + amp *
    (12 - ambient) / 8, clipped to [heat_min, heat_max], times the same noise
    model. Everything is deterministic in (seed, template name).
    """
    tpl = TEMPLATES[template] if isinstance(template, str) else template
    weather = synth_weather(seed, days, period_min)
    rng = np.random.default_rng([seed, _template_code(tpl.name)])
    n_day = 24 * 60 // period_min
    h = np.tile((np.arange(n_day) + 0.5) * period_min / 60.0, days)
    day = np.repeat(np.arange(days), n_day)
    shape = 0.6 * np.exp(-0.5 * ((h - 8.0) / 2.0) ** 2) + 0.4 * np.exp(-0.5 * ((h - 19.0) / 2.5) ** 2)
    week = np.where(day % 7 >= 5, tpl.weekend, 1.0)
    el = (tpl.el_base + tpl.el_amp * (2.0 * shape - 0.5)) * week
    el = el * (1.0 + tpl.noise * rng.standard_normal(el.size))
    heat = tpl.heat_base + tpl.heat_amp * (12.0 - weather["ambient"]) / 8.0
    heat = heat * (1.0 + tpl.noise * rng.standard_normal(heat.size))
    heat = np.clip(heat, tpl.heat_min, tpl.heat_max)
    return {"electric": np.maximum(el, 0.0), "heat": np.maximum(heat, 0.0), **weather}


# --------------------------------------------------------------------- scenario

@dataclass(frozen=True)
class GridConfig:
    kind: str = "uniform"                     # "uniform" or "mh"
    t_pred_min: int = 1440
    t_res_min: int = 60
    schedule: Any = None                      # name or list of (res_min, count)

    def build(self, plant_step_min: int) -> TimeGrid:
        if self.kind == "uniform":
            return build_uniform(self.t_pred_min, self.t_res_min, plant_step_min)
        if self.kind == "mh":
            sched = named_schedule(self.schedule) if isinstance(self.schedule, str) else self.schedule
            return build_multi_horizon(sched, plant_step_min)
        raise ConfigError(f"grid.kind must be 'uniform' or 'mh', got {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "GridConfig":
        """``uniform:<pred>:<res>`` (minutes, or with an h suffix) or ``mh:<schedule-name>``."""
        parts = text.split(":")
        if parts[0] == "uniform" and len(parts) == 3:
            return cls("uniform", _minutes(parts[1]), _minutes(parts[2]))
        if parts[0] == "mh" and len(parts) == 2:
            named_schedule(parts[1])
            return cls("mh", schedule=parts[1])
        raise ConfigError(f"bad grid {text!r}; expected uniform:<pred>:<res> or mh:<name>")

    def label(self) -> str:
        if self.kind == "uniform":
            return f"uniform:{self.t_pred_min}:{self.t_res_min}"
        return f"mh:{self.schedule if isinstance(self.schedule, str) else 'custom'}"


def _minutes(text: str) -> int:
    t = text.strip().lower()
    try:
        if t.endswith("h"):
            return int(t[:-1]) * 60
        if t.endswith("min"):
            return int(t[:-3])
        return int(t)
    except ValueError:
        raise ConfigError(f"bad duration {text!r}") from None


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 0.1
    eps: float = 1e-3
    h_max: int = 150
    max_seconds: float = 600.0


@dataclass(frozen=True)
class Scenario:
    network: NetworkSpec
    profiles: Mapping[str, Profile]
    bindings: Mapping[str, Mapping[str, str]]       # hub id -> signal -> profile name
    grid: GridConfig = field(default_factory=GridConfig)
    t_sim_min: int = 3 * 1440
    plant_step_min: int = 15
    seed: int = 0
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    tariff_profile: str | None = None                # optional c_in override
    name: str = "scenario"
    sources: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def hub_profile(self, hub_id: str, signal: str) -> np.ndarray:
        """Plant-resolution samples of one bound signal."""
        return self.profiles[self.bindings[hub_id][signal]].resample(self.plant_step_min)

    def validate(self):
        errors: list[str] = []
        self.network.validate(errors)
        for pname, p in self.profiles.items():
            p.validate(f"profiles.{pname}", errors)
        for hub in self.network.hubs:
            b = self.bindings.get(hub.id, {})
            for sig in HUB_SIGNALS:
                ref = b.get(sig)
                where = f"hubs.{hub.id}.profiles.{sig}"
                if ref is None:
                    errors.append(f"{where}: missing profile binding")
                elif ref not in self.profiles:
                    errors.append(f"{where}: unknown profile {ref!r}")
                elif self.profiles[ref].kind != sig:
                    errors.append(f"{where}: profile {ref!r} has kind {self.profiles[ref].kind}")
        if self.tariff_profile is not None:
            p = self.profiles.get(self.tariff_profile)
            if p is None or p.kind != "tariff":
                errors.append(f"tariff_profile: {self.tariff_profile!r} is not a tariff profile")
        if self.plant_step_min <= 0:
            errors.append("plant_step_min must be positive")
        if self.t_sim_min <= 0 or self.t_sim_min % max(self.plant_step_min, 1):
            errors.append("t_sim_min must be a positive multiple of plant_step_min")
        try:
            grid = self.grid.build(self.plant_step_min)
        except ConfigError as exc:
            errors.append(f"grid: {exc}")
            grid = None
        if grid is not None:
            need = self.t_sim_min + grid.t_pred_min
            for name, p in self.profiles.items():
                if p.period_min > 0 and p.span_min < need and _is_bound(self, name):
                    errors.append(f"profiles.{name}: covers {p.span_min} min, need {need} "
                                  f"(t_sim {self.t_sim_min} + t_pred {grid.t_pred_min})")
                if p.period_min > 0 and p.period_min % max(self.plant_step_min, 1):
                    errors.append(f"profiles.{name}: period {p.period_min} min not a multiple of plant step")
        if self.admm.rho <= 0:
            errors.append(f"admm.rho must be positive, got {self.admm.rho}")
        if self.admm.eps <= 0:
            errors.append(f"admm.eps must be positive, got {self.admm.eps}")
        if self.admm.h_max < 1:
            errors.append(f"admm.h_max must be >= 1, got {self.admm.h_max}")
        if errors:
            raise ConfigError("invalid scenario:\n  " + "\n  ".join(errors))
        return self


def _is_bound(sc: Scenario, name: str) -> bool:
    return name == sc.tariff_profile or any(name in b.values() for b in sc.bindings.values())


# --------------------------------------------------------------- YAML mapping

def _device_from(kind: str, raw: Mapping, where: str, errors: list[str]):
    cls = DEVICE_TYPES[kind]
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        errors.append(f"{where}: unknown field(s) {', '.join(sorted(unknown))}")
    kw = {}
    for k, v in raw.items():
        if k not in names:
            continue
        if isinstance(v, list):
            v = tuple(float(x) for x in v)
        elif isinstance(v, str) and v in ("inf", ".inf"):
            v = math.inf
        kw[k] = v
    try:
        dev = cls(**kw)
    except TypeError as exc:
        errors.append(f"{where}: {exc}")
        return None
    dev.validate(where, errors)
    return dev


def _device_to(dev) -> dict:
    out = {}
    for f in fields(dev):
        v = getattr(dev, f.name)
        if f.name == "allow_share_mismatch" and not v:
            continue
        if f.name == "e0" and v is None:
            continue
        if isinstance(v, tuple):
            v = [float(x) for x in v]
        elif isinstance(v, float) and math.isinf(v):
            continue
        out[f.name] = v
    return out


def _profile_from(name: str, raw: Mapping, base: Path, where: str, errors: list[str],
                  synth_cfg: Mapping) -> Profile | None:
    kind = raw.get("kind")
    if kind not in KINDS:
        errors.append(f"{where}.kind: expected one of {', '.join(KINDS)}, got {kind!r}")
        return None
    period = int(raw.get("period_min", 15))
    try:
        if "csv" in raw:
            p = ingest_csv_profile(base / raw["csv"], kind, raw.get("period_min"), name)
            return p
        if "values" in raw:
            return Profile(name, kind, period, np.array(raw["values"], dtype=float))
        if "synthetic" in raw:
            s = raw["synthetic"] or {}
            seed = int(s.get("seed", synth_cfg.get("seed", 0)))
            days = int(s.get("days", synth_cfg.get("days", 1)))
            template = s.get("template", "hub1")
            signal = s.get("signal", kind)
            if template not in TEMPLATES:
                errors.append(f"{where}.synthetic.template: unknown template {template!r}")
                return None
            data = synth_profiles(seed, days, template, period)
            if signal not in data:
                errors.append(f"{where}.synthetic.signal: unknown signal {signal!r}")
                return None
            return Profile(name, kind, period, data[signal])
    except ConfigError as exc:
        errors.append(f"{where}: {exc}")
        return None
    errors.append(f"{where}: need one of 'csv', 'values' or 'synthetic'")
    return None


def scenario_from_dict(doc: Mapping, base: Path | str = ".", name: str = "scenario") -> Scenario:
    """Build and validate a Scenario; all problems are reported in one error."""
    base = Path(base)
    errors: list[str] = []
    if not isinstance(doc, Mapping):
        raise ConfigError("scenario document must be a mapping")
    ver = doc.get("schema_version")
    if ver != SCHEMA_VERSION:
        errors.append(f"schema_version: expected {SCHEMA_VERSION}, got {ver!r}")

    hubs, bindings = [], {}
    for i, h in enumerate(doc.get("hubs") or []):
        where = f"hubs[{i}]"
        hid = str(h.get("id", "")) if isinstance(h, Mapping) else ""
        if not hid:
            errors.append(f"{where}.id: missing")
            continue
        where = f"hubs.{hid}"
        devs = {}
        for kind, raw in (h.get("devices") or {}).items():
            if kind not in DEVICE_TYPES:
                errors.append(f"{where}.devices.{kind}: unknown device type")
                continue
            devs[kind] = _device_from(kind, raw or {}, f"{where}.{kind}", errors)
        hubs.append(HubSpec(hid, **devs))
        bindings[hid] = dict(h.get("profiles") or {})
    if not hubs:
        errors.append("hubs: at least one hub is required")

    ids = [h.id for h in hubs]
    links = {}
    for i, l in enumerate(doc.get("links") or []):
        where = f"links[{i}]"
        pair = l.get("hubs") if isinstance(l, Mapping) else None
        if not pair or len(pair) != 2:
            errors.append(f"{where}.hubs: need exactly two hub ids")
            continue
        a, b = map(str, pair)
        if a not in ids or b not in ids or a == b:
            errors.append(f"{where}.hubs: bad pair {a}-{b}")
            continue
        kw = {k: float(l[k]) for k in ("kappa_e", "kappa_h", "zeta_e", "zeta_h") if k in l}
        key = (a, b) if ids.index(a) < ids.index(b) else (b, a)
        if key in links:
            errors.append(f"{where}: duplicate link {a}-{b}")
        links[key] = Link(**kw)

    tariffs_raw = doc.get("tariffs") or {}
    tnames = {f.name for f in fields(Tariffs)}
    bad = set(tariffs_raw) - tnames
    if bad:
        errors.append(f"tariffs: unknown field(s) {', '.join(sorted(bad))}")
    tariffs = Tariffs(**{k: float(v) for k, v in tariffs_raw.items() if k in tnames})

    synth_cfg = doc.get("synthetic") or {}
    profiles = {}
    for pname, raw in (doc.get("profiles") or {}).items():
        p = _profile_from(str(pname), raw or {}, base, f"profiles.{pname}", errors, synth_cfg)
        if p is not None:
            profiles[str(pname)] = p

    g = doc.get("grid") or {}
    try:
        grid = GridConfig(g.get("kind", "uniform"), int(g.get("t_pred_min", 1440)), int(g.get("t_res_min", 60)),
                          _schedule_in(g.get("schedule")))
    except (TypeError, ValueError) as exc:
        errors.append(f"grid: {exc}")
        grid = GridConfig()
    a = doc.get("admm") or {}
    admm = AdmmConfig(float(a.get("rho", 0.1)), float(a.get("eps", 1e-3)), int(a.get("h_max", 150)),
                      float(a.get("max_seconds", 600.0)))
    if errors:
        raise ConfigError("invalid scenario:\n  " + "\n  ".join(errors))
    net = NetworkSpec(tuple(hubs), links, tariffs, float(doc.get("heat_slack_penalty", 10.0)))
    sc = Scenario(net, profiles, bindings, grid, int(doc.get("t_sim_min", 3 * 1440)),
                  int(doc.get("plant_step_min", 15)), int(doc.get("seed", 0)), admm,
                  doc.get("tariff_profile"), str(doc.get("name", name)),
                  sources={"profiles": dict(doc.get("profiles") or {}), "synthetic": dict(synth_cfg)})
    return sc.validate()


def _schedule_in(s):
    if s is None or isinstance(s, str):
        return s
    out = []
    for e in s:
        out.append((int(e["res_min"]), int(e["count"])) if isinstance(e, Mapping) else (int(e[0]), int(e[1])))
    return tuple(out)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read scenario {path}: {exc.strerror}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"{path}: parse error{loc}: {getattr(exc, 'problem', exc)}") from None
    return scenario_from_dict(doc, path.parent, path.stem)


def scenario_to_dict(sc: Scenario, inline_profiles: bool = False) -> dict:
    """Serialisable document; profiles keep their original source unless inlined."""
    hubs = []
    for h in sc.network.hubs:
        devs = {k: _device_to(getattr(h, k)) for k in HubSpec.DEVICES if getattr(h, k) is not None}
        hubs.append({"id": h.id, "devices": devs, "profiles": dict(sc.bindings.get(h.id, {}))})
    links = [{"hubs": list(p), **asdict(l)} for p, l in sc.network.links.items()]
    src = sc.sources.get("profiles", {})
    profiles = {}
    for name, p in sc.profiles.items():
        if not inline_profiles and name in src and "csv" not in src[name]:
            profiles[name] = src[name]
        else:
            profiles[name] = {"kind": p.kind, "period_min": p.period_min, "values": p.values.tolist()}
    g = sc.grid
    grid = {"kind": g.kind, "t_pred_min": g.t_pred_min, "t_res_min": g.t_res_min}
    if g.schedule is not None:
        grid["schedule"] = g.schedule if isinstance(g.schedule, str) else \
            [{"res_min": r, "count": c} for r, c in g.schedule]
    doc = {
        "schema_version": SCHEMA_VERSION, "name": sc.name, "seed": sc.seed,
        "plant_step_min": sc.plant_step_min, "t_sim_min": sc.t_sim_min, "grid": grid,
        "tariffs": asdict(sc.network.tariffs), "heat_slack_penalty": sc.network.heat_slack_penalty,
        "admm": asdict(sc.admm), "hubs": hubs, "links": links, "profiles": profiles,
    }
    if sc.sources.get("synthetic"):
        doc["synthetic"] = dict(sc.sources["synthetic"])
    if sc.tariff_profile:
        doc["tariff_profile"] = sc.tariff_profile
    return doc


def write_scenario(sc: Scenario, path, inline_profiles: bool = False) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(sc, inline_profiles), sort_keys=False))


# ------------------------------------------------------------------ benchmark

BENCHMARK_FILE = "benchmark_3hub.yaml"


def benchmark_path() -> Path:
    return Path(str(resources.files("hubmpc") / "data" / BENCHMARK_FILE))


def load_benchmark(**overrides) -> Scenario:
    """The bundled three-hub benchmark; keyword overrides replace Scenario fields."""
    sc = load_scenario(benchmark_path())
    return replace(sc, **overrides).validate() if overrides else sc


def with_synthetic_days(sc: Scenario, days: int, seed: int | None = None) -> Scenario:
    """Regenerate every synthetic profile of ``sc`` for a different length/seed."""
    seed = sc.seed if seed is None else seed
    profiles = dict(sc.profiles)
    src = dict(sc.sources.get("profiles", {}))
    for name, raw in src.items():
        s = raw.get("synthetic") if isinstance(raw, Mapping) else None
        if s is None:
            continue
        s = {**s, "days": days, "seed": seed}
        data = synth_profiles(seed, days, s.get("template", "hub1"), int(raw.get("period_min", 15)))
        profiles[name] = Profile(name, raw["kind"], int(raw.get("period_min", 15)), data[s.get("signal", raw["kind"])])
        src[name] = {**raw, "synthetic": s}
    sources = {**sc.sources, "profiles": src, "synthetic": {"days": days, "seed": seed}}
    return replace(sc, profiles=profiles, seed=seed, sources=sources)

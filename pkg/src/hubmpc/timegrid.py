"""Prediction-horizon time grids in integer minutes.

A grid is a contiguous sequence of steps whose durations never shrink along
the horizon. Uniform grids are the special case of a single resolution;
multi-horizon grids coarsen forward (fine steps first, coarse tail).
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError

# Default 72 h schedule and a 48 h variant.
MH_72H = ((15, 4), (30, 6), (60, 8), (120, 6), (240, 6), (360, 4))
MH_48H = ((15, 4), (30, 6), (60, 8), (120, 6), (240, 6))

NAMED_SCHEDULES = {
    "mh_72h": MH_72H,
    "mh_48h": MH_48H,
}


@dataclass(frozen=True)
class Step:
    offset_min: int
    duration_min: int

    @property
    def end_min(self) -> int:
        return self.offset_min + self.duration_min

    @property
    def hours(self) -> float:
        return self.duration_min / 60.0


@dataclass(frozen=True)
class TimeGrid:
    steps: tuple[Step, ...]
    plant_step_min: int

    def __post_init__(self):
        if not self.steps:
            raise ConfigError("time grid must contain at least one step")
        if self.plant_step_min <= 0:
            raise ConfigError(f"plant_step_min must be positive, got {self.plant_step_min}")
        expected = 0
        prev = 0
        for k, s in enumerate(self.steps):
            if s.duration_min <= 0:
                raise ConfigError(f"step {k} has non-positive duration {s.duration_min}")
            if s.offset_min != expected:
                raise ConfigError(f"step {k} offset {s.offset_min} != {expected} (grid not contiguous)")
            if s.duration_min < prev:
                raise ConfigError(
                    f"step {k} duration {s.duration_min} min is finer than step {k - 1} ({prev} min)")
            if s.duration_min % self.plant_step_min:
                raise ConfigError(
                    f"step {k} duration {s.duration_min} min is not a multiple of "
                    f"plant_step_min={self.plant_step_min}")
            expected += s.duration_min
            prev = s.duration_min

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def t_pred_min(self) -> int:
        return sum(s.duration_min for s in self.steps)

    @property
    def offsets_min(self) -> list[int]:
        return [s.offset_min for s in self.steps]

    @property
    def durations_min(self) -> list[int]:
        return [s.duration_min for s in self.steps]

    @property
    def durations_h(self) -> list[float]:
        return [s.hours for s in self.steps]

    @property
    def is_uniform(self) -> bool:
        return len({s.duration_min for s in self.steps}) == 1

    def step_at(self, t_min: int) -> int | None:
        """Index of the step whose interval [offset, end) contains ``t_min``."""
        if t_min < 0 or t_min >= self.t_pred_min:
            return None
        return bisect_right(self.offsets_min, t_min) - 1

    def coverage(self) -> list[tuple[int, int, int]]:
        """(resolution, count, minutes covered) per contiguous resolution block."""
        blocks: list[list[int]] = []
        for s in self.steps:
            if blocks and blocks[-1][0] == s.duration_min:
                blocks[-1][1] += 1
            else:
                blocks.append([s.duration_min, 1])
        return [(r, n, r * n) for r, n in blocks]


def _from_durations(durations: Iterable[int], plant_step_min: int) -> TimeGrid:
    steps = []
    t = 0
    for d in durations:
        steps.append(Step(t, int(d)))
        t += int(d)
    return TimeGrid(tuple(steps), int(plant_step_min))


def build_uniform(t_pred_min: int, t_res_min: int, plant_step_min: int) -> TimeGrid:
    if t_res_min <= 0 or t_pred_min <= 0 or plant_step_min <= 0:
        raise ConfigError(
            f"t_pred_min={t_pred_min}, t_res_min={t_res_min} and "
            f"plant_step_min={plant_step_min} must all be positive")
    if t_pred_min % t_res_min:
        raise ConfigError(f"t_res_min={t_res_min} does not divide t_pred_min={t_pred_min}")
    if t_res_min % plant_step_min:
        raise ConfigError(f"plant_step_min={plant_step_min} does not divide t_res_min={t_res_min}")
    return _from_durations([t_res_min] * (t_pred_min // t_res_min), plant_step_min)


def _schedule_pairs(schedule) -> list[tuple[int, int]]:
    pairs = []
    for entry in schedule:
        if isinstance(entry, Mapping):
            pairs.append((int(entry["res_min"]), int(entry["count"])))
        else:
            res, count = entry
            pairs.append((int(res), int(count)))
    return pairs


def build_multi_horizon(schedule: Sequence, plant_step_min: int) -> TimeGrid:
    """Concatenate ``count`` steps of each resolution, in order.

    ``schedule`` entries are ``(res_min, count)`` pairs or mappings with
    ``res_min`` / ``count`` keys.
    """
    pairs = _schedule_pairs(schedule)
    if not pairs:
        raise ConfigError("multi-horizon schedule is empty")
    prev = 0
    durations: list[int] = []
    for i, (res, count) in enumerate(pairs):
        if res <= 0 or count <= 0:
            raise ConfigError(f"schedule entry {i}: res_min={res} and count={count} must be positive")
        if res < prev:
            raise ConfigError(
                f"schedule entry {i}: resolution {res} min is finer than the preceding "
                f"{prev} min; multi-horizon grids must coarsen forward")
        if res % plant_step_min:
            raise ConfigError(
                f"schedule entry {i}: res_min={res} is not a multiple of plant_step_min={plant_step_min}")
        durations.extend([res] * count)
        prev = res
    return _from_durations(durations, plant_step_min)


def named_schedule(name: str) -> tuple[tuple[int, int], ...]:
    try:
        return NAMED_SCHEDULES[name]
    except KeyError:
        raise ConfigError(f"unknown schedule {name!r}; known: {sorted(NAMED_SCHEDULES)}") from None


def controller_period(grid: TimeGrid) -> int:
    """The controller re-solves at the resolution of the first step."""
    return grid.steps[0].duration_min


def shift_map(grid: TimeGrid) -> dict[int, int]:
    """Map old step indices to new ones after re-anchoring one controller period later.

    Each old step k >= 1 maps to the new step containing its start time. The
    map is kept injective: if two old steps would land in the same new step
    only the first is kept.
    """
    period = controller_period(grid)
    mapping: dict[int, int] = {}
    taken: set[int] = set()
    for k in range(1, grid.n_steps):
        m = grid.step_at(grid.steps[k].offset_min - period)
        if m is None or m in taken:
            continue
        mapping[k] = m
        taken.add(m)
    return mapping

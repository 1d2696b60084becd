"""Immutable network data model shared by every stage of the pipeline.

Powers are stored in MW and susceptances in per-unit on ``base_mva``; the
formulation converts to per-unit when it assembles the optimization problem.
Susceptance follows the DC convention ``b = 1/x`` (positive for inductive
branches), i.e. the negative of the AC series susceptance.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable


@dataclass(frozen=True)
class Substation:
    id: int
    is_reference: bool = False


@dataclass(frozen=True)
class Line:
    id: int
    from_sub: int
    to_sub: int
    susceptance_nominal: float
    p_max_static: float
    vid_equipped: bool = False
    dlr_equipped: bool = False
    # False when the source case gave no thermal rating (MATPOWER rateA = 0)
    rated: bool = True


@dataclass(frozen=True)
class Generator:
    id: int
    substation: int
    p_min: float
    p_max: float
    cost_quadratic: float = 0.0
    cost_linear: float = 0.0
    cost_constant: float = 0.0

    def cost(self, p_mw: float) -> float:
        """Hourly cost in $/h at output ``p_mw``."""
        return self.cost_quadratic * p_mw * p_mw + self.cost_linear * p_mw + self.cost_constant


@dataclass(frozen=True)
class Demand:
    id: int
    substation: int
    p_max_nominal: float
    multiplier: float = 1.0

    @property
    def p_max(self) -> float:
        """Effective demand after the hourly load multiplier."""
        return self.p_max_nominal * self.multiplier


@dataclass(frozen=True)
class LoadProfile:
    multipliers: tuple[float, ...]

    def __post_init__(self):
        if len(self.multipliers) != 24:
            raise ValueError(f"load profile needs 24 hourly multipliers, got {len(self.multipliers)}")
        if any(m < 0 for m in self.multipliers):
            raise ValueError("load multipliers must be nonnegative")


@dataclass(frozen=True)
class WeatherSample:
    hour: int
    ambient_temp: float
    wind_speed: float


@dataclass(frozen=True)
class WeatherSeries:
    samples: tuple[WeatherSample, ...]
    label: str = "custom"

    def __post_init__(self):
        hours = [s.hour for s in self.samples]
        if any(b <= a for a, b in zip(hours, hours[1:])):
            raise ValueError("weather hours must be strictly increasing")
        if any(s.wind_speed < 0 for s in self.samples):
            raise ValueError("wind speed must be nonnegative")

    def at(self, hour: int) -> WeatherSample:
        for s in self.samples:
            if s.hour == hour:
                return s
        raise KeyError(f"weather series has no sample for hour {hour}")

    @property
    def hours(self) -> tuple[int, ...]:
        return tuple(s.hour for s in self.samples)


@dataclass(frozen=True)
class Network:
    substations: tuple[Substation, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    demands: tuple[Demand, ...]
    base_mva: float = 100.0
    name: str = "network"
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        # accept lists for convenience, store tuples
        for attr in ("substations", "lines", "generators", "demands"):
            value = getattr(self, attr)
            if not isinstance(value, tuple):
                object.__setattr__(self, attr, tuple(value))

    # -- incidence sets ---------------------------------------------------
    @cached_property
    def substation_ids(self) -> tuple[int, ...]:
        return tuple(s.id for s in self.substations)

    @cached_property
    def reference(self) -> Substation:
        refs = [s for s in self.substations if s.is_reference]
        if len(refs) != 1:
            raise ValueError(f"network needs exactly one reference substation, found {len(refs)}")
        return refs[0]

    @cached_property
    def _incidence(self) -> dict[str, dict[int, tuple[int, ...]]]:
        sets: dict[str, dict[int, list[int]]] = {k: {s.id: [] for s in self.substations} for k in "GDFT"}
        for g in self.generators:
            sets["G"].setdefault(g.substation, []).append(g.id)
        for d in self.demands:
            sets["D"].setdefault(d.substation, []).append(d.id)
        for l in self.lines:
            sets["F"].setdefault(l.from_sub, []).append(l.id)
            sets["T"].setdefault(l.to_sub, []).append(l.id)
        return {k: {b: tuple(v) for b, v in d.items()} for k, d in sets.items()}

    def generators_at(self, sub: int) -> tuple[int, ...]:
        """G_b: generator ids housed in substation ``sub``."""
        return self._incidence["G"].get(sub, ())

    def demands_at(self, sub: int) -> tuple[int, ...]:
        """D_b: demand ids housed in substation ``sub``."""
        return self._incidence["D"].get(sub, ())

    def lines_from(self, sub: int) -> tuple[int, ...]:
        """LF_b: lines whose from-end is at ``sub``."""
        return self._incidence["F"].get(sub, ())

    def lines_to(self, sub: int) -> tuple[int, ...]:
        """LT_b: lines whose to-end is at ``sub``."""
        return self._incidence["T"].get(sub, ())

    def line(self, line_id: int) -> Line:
        return self._by_id("lines")[line_id]

    def generator(self, gen_id: int) -> Generator:
        return self._by_id("generators")[gen_id]

    def demand(self, demand_id: int) -> Demand:
        return self._by_id("demands")[demand_id]

    def _by_id(self, attr: str) -> dict:
        if self._index is None:
            object.__setattr__(self, "_index", {})
        if attr not in self._index:
            self._index[attr] = {e.id: e for e in getattr(self, attr)}
        return self._index[attr]

    # -- derived copies ---------------------------------------------------
    def replace(self, **changes) -> "Network":
        return dataclasses.replace(self, **changes)

    def with_lines(self, lines: Iterable[Line]) -> "Network":
        return self.replace(lines=tuple(lines))

    def equip(self, dlr: Iterable[int] = (), vid: Iterable[int] = ()) -> "Network":
        """Copy with exactly the given lines flagged for DLR and VID."""
        dlr, vid = set(dlr), set(vid)
        return self.with_lines(
            dataclasses.replace(l, dlr_equipped=l.id in dlr, vid_equipped=l.id in vid) for l in self.lines
        )

    @property
    def total_demand(self) -> float:
        return sum(d.p_max for d in self.demands)

    @property
    def total_capacity(self) -> float:
        return sum(g.p_max for g in self.generators)

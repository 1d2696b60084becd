"""Experiment protocol: congestion, line priority, DLR x VID sweeps and loading metrics.

A sweep runs in three stages:

1. the uncongested base case (static ratings, nominal topology) per period,
   whose flows set the congestion limits of unrated lines;
2. the congested baseline (no DLR/VID, nominal topology), whose mean line
   loading ranks lines by priority;
3. one cell per (DLR count, VID count): the top-``d`` priority lines get
   DLR and the top-``v`` get VID, and every period is solved.

Each cell's total is the weighted sum over periods of the model objective
(piecewise-linear generation cost plus VOLL shedding), in $.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import formulation as F
from .case_io import bundled_profile, bundled_weather, load_case, load_profile, load_weather
from .dlr import ConductorConfig, RatingSeries, build_rating_series, load_conductor_config
from .network import Network, WeatherSample, WeatherSeries
from .solver import SolverConfig, SolveResult, run

log = logging.getLogger(__name__)

BUNDLED_WEATHER = ("high_wind", "low_wind", "slr_ref")


@dataclass(frozen=True)
class Period:
    """One solve of the horizon: an hour, or a block represented by its averages."""

    hour: int
    weight: float
    load_multiplier: float
    weather: WeatherSample


@dataclass(frozen=True)
class ScenarioSpec:
    case: str = "case24"
    weather: str = "high_wind"  # bundled profile name or CSV path
    congestion_factor: float = 0.5
    dlr_counts: tuple[int, ...] = (0, 4, 8, 12, 16, 20)
    vid_counts: tuple[int, ...] = (0, 4, 8, 12, 16, 20)
    topology_mode: str = "fixed"
    hours: str | tuple[int, ...] = "auto"  # "auto", "hourly", "blocks6" or explicit hours
    priority_list: str | tuple[int, ...] = "auto"
    profile: str = "rts_winter_weekday"  # bundled load profile name or CSV path
    conductors: str | None = None
    formulation: F.FormulationConfig = F.FormulationConfig()
    solver: SolverConfig = SolverConfig()

    def __post_init__(self):
        if not 0 < self.congestion_factor <= 1:
            raise ValueError("congestion_factor must lie in (0, 1]")
        if self.topology_mode not in ("fixed", "optimized"):
            raise ValueError("topology_mode must be 'fixed' or 'optimized'")
        for c in (*self.dlr_counts, *self.vid_counts):
            if c < 0:
                raise ValueError("line counts must be nonnegative")
        object.__setattr__(self, "dlr_counts", tuple(sorted(set(self.dlr_counts))))
        object.__setattr__(self, "vid_counts", tuple(sorted(set(self.vid_counts))))
        object.__setattr__(self, "formulation", dataclasses.replace(self.formulation, topology_mode=self.topology_mode))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["formulation"]["big_m"] = str(d["formulation"]["big_m"]) if not isinstance(self.formulation.big_m, dict) else {
            str(k): v for k, v in self.formulation.big_m.items()
        }
        return d

    def digest(self) -> str:
        """Hash of everything that determines cell values (not limits on effort)."""
        d = self.to_dict()
        for k in ("dlr_counts", "vid_counts"):
            d.pop(k)
        d["solver"] = {k: v for k, v in d["solver"].items() if k not in ("log_every", "debug")}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# inputs
# ---------------------------------------------------------------------------
def base_network(case: str | Network) -> Network:
    """Scenario base case: the parsed network with generator minimum outputs at zero."""
    net = load_case(case) if not isinstance(case, Network) else case
    return net.replace(generators=tuple(dataclasses.replace(g, p_min=0.0) for g in net.generators))


def resolve_weather(weather: str | WeatherSeries) -> WeatherSeries:
    if isinstance(weather, WeatherSeries):
        return weather
    if weather in BUNDLED_WEATHER:
        return bundled_weather(weather)
    path = Path(weather)
    if not path.exists() and path.stem in BUNDLED_WEATHER:
        return bundled_weather(path.stem)
    return load_weather(path, label=path.stem)


def resolve_profile(profile: str):
    return bundled_profile(profile) if not Path(profile).suffix else load_profile(profile)


def horizon(spec: ScenarioSpec, net: Network | None = None, weather: WeatherSeries | None = None) -> list[Period]:
    """Periods of the sweep horizon.

    ``auto`` picks hourly periods for networks up to 30 substations and
    6-hour blocks (averaged load and weather, weight 6) for larger ones.
    """
    weather = weather or resolve_weather(spec.weather)
    mult = resolve_profile(spec.profile).multipliers
    mode = spec.hours
    if mode == "auto":
        n = len((net or load_case(spec.case)).substations)
        mode = "hourly" if n <= 30 else "blocks6"
    if mode == "blocks6":
        out = []
        for start in range(0, 24, 6):
            hrs = range(start, start + 6)
            ws = [weather.at(h) for h in hrs]
            avg = WeatherSample(
                start, sum(w.ambient_temp for w in ws) / 6, sum(w.wind_speed for w in ws) / 6
            )
            out.append(Period(start, 6.0, sum(mult[h] for h in hrs) / 6, avg))
        return out
    hours = range(24) if mode == "hourly" else mode
    return [Period(h, 1.0, mult[h], weather.at(h)) for h in hours]


def period_weather(periods: Sequence[Period], label: str = "periods") -> WeatherSeries:
    return WeatherSeries(tuple(p.weather for p in periods), label)


def at_load(net: Network, multiplier: float) -> Network:
    return net.replace(demands=tuple(dataclasses.replace(d, multiplier=multiplier) for d in net.demands))


# ---------------------------------------------------------------------------
# protocol steps
# ---------------------------------------------------------------------------
def solve_period(net: Network, ratings: RatingSeries | None, period: Period, fcfg: F.FormulationConfig,
                 scfg: SolverConfig) -> SolveResult:
    f = F.build(at_load(net, period.load_multiplier), ratings, fcfg, hour=period.hour)
    hint = F.nominal_assignment(f) if fcfg.topology_mode == "optimized" else None
    return run(f, scfg, hint=hint)


def apply_congestion(net: Network, base_solutions: Sequence[F.SolutionPoint], factor: float = 0.5) -> Network:
    """Scale every line limit by ``factor``.

    Lines without a thermal rating in the source case are limited to
    ``factor`` times their largest base-case flow instead.
    """
    if not factor > 0:
        raise ValueError("congestion factor must be positive")
    if factor > 1:
        raise ValueError("congestion factor must not exceed 1")
    need = [l.id for l in net.lines if not l.rated]
    if need and not base_solutions:
        raise ValueError("unrated lines need base-case solutions")
    peak = {lid: max(abs(s.flows[lid]) for s in base_solutions) for lid in need}
    lines = []
    for l in net.lines:
        base = l.p_max_static if l.rated else max(peak[l.id], 1.0)
        lines.append(dataclasses.replace(l, p_max_static=factor * base) if factor != 1 or not l.rated else l)
    return net.with_lines(lines)


@dataclass
class LoadingReport:
    baseline: dict[int, float]
    treated: dict[int, float]

    @property
    def delta(self) -> dict[int, float]:
        return {l: self.treated[l] - self.baseline[l] for l in self.treated}

    @property
    def mean_delta(self) -> float:
        d = self.delta
        return sum(d.values()) / len(d) if d else 0.0


def line_loading(solutions: Sequence[F.SolutionPoint], ratings: RatingSeries | None = None,
                 weights: Sequence[float] | None = None) -> dict[int, float]:
    """Weighted mean of |flow| / limit per line, using each hour's limit."""
    if not solutions:
        raise ValueError("no solutions")
    weights = list(weights) if weights is not None else [1.0] * len(solutions)
    if ratings is not None:
        have = set(ratings.hours)
        missing = [s.hour for s in solutions if s.hour not in have]
        if missing:
            raise ValueError(f"ratings do not cover hours {missing}")
    total = sum(weights)
    out = {}
    for lid in solutions[0].flows:
        acc = 0.0
        for s, w in zip(solutions, weights):
            lim = ratings.limit(lid, s.hour) if ratings is not None else s.limits[lid]
            acc += w * abs(s.flows[lid]) / lim
        out[lid] = acc / total
    return out


def mean_line_loading(solutions, ratings=None, baseline: LoadingReport | dict | None = None, weights=None) -> LoadingReport:
    """Loading report of ``solutions``; the baseline defaults to the same values."""
    treated = line_loading(solutions, ratings, weights)
    if isinstance(baseline, LoadingReport):
        base = baseline.treated
    elif baseline is None:
        base = dict(treated)
    else:
        base = dict(baseline)
    return LoadingReport(base, treated)


def rank_priority_lines(net: Network, base_solutions: Sequence[F.SolutionPoint], weights=None) -> list[int]:
    """Lines by descending mean baseline loading, ties by id."""
    if not base_solutions:
        raise ValueError("missing baseline solutions")
    u = line_loading(base_solutions, None, weights)
    missing = [l.id for l in net.lines if l.id not in u]
    if missing:
        raise ValueError(f"baseline lacks lines {missing[:5]}")
    return sorted((l.id for l in net.lines), key=lambda lid: (-round(u[lid], 12), lid))


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------
@dataclass
class CellResult:
    dlr_lines: int
    vid_lines: int
    objective: float
    max_rel_gap: float
    status: str
    periods: list[dict]
    runtime: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CellResult":
        return cls(**d)


@dataclass
class CostMatrix:
    dlr_counts: tuple[int, ...]
    vid_counts: tuple[int, ...]
    cells: dict[tuple[int, int], CellResult]
    metadata: dict = field(default_factory=dict)

    @property
    def baseline(self) -> float:
        return self.cells[(self.dlr_counts[0], self.vid_counts[0])].objective

    def objective(self, d: int, v: int) -> float:
        return self.cells[(d, v)].objective

    def change_pct(self, d: int, v: int) -> float:
        return 100.0 * (self.objective(d, v) - self.baseline) / self.baseline

    def to_csv(self) -> str:
        rows = ["dlr_lines,vid_lines,objective,change_pct,max_rel_gap,status"]
        for d in self.dlr_counts:
            for v in self.vid_counts:
                c = self.cells[(d, v)]
                rows.append(f"{d},{v},{c.objective:.2f},{self.change_pct(d, v):.1f},{c.max_rel_gap:.6f},{c.status}")
        return "\n".join(rows) + "\n"

    def to_dict(self) -> dict:
        return {
            "dlr_counts": list(self.dlr_counts),
            "vid_counts": list(self.vid_counts),
            "metadata": self.metadata,
            "cells": [
                {"dlr_lines": d, "vid_lines": v, "objective": round(c.objective, 6),
                 "change_pct": round(self.change_pct(d, v), 6), "max_rel_gap": round(c.max_rel_gap, 9),
                 "status": c.status}
                for (d, v), c in sorted(self.cells.items())
            ],
        }

    @classmethod
    def from_csv(cls, text: str, metadata: dict | None = None) -> "CostMatrix":
        lines = text.strip().splitlines()
        if lines[0] != "dlr_lines,vid_lines,objective,change_pct,max_rel_gap,status":
            raise ValueError("not a cost matrix CSV")
        cells = {}
        for row in lines[1:]:
            d, v, obj, _, gap, status = row.split(",")
            cells[(int(d), int(v))] = CellResult(int(d), int(v), float(obj), float(gap), status, [])
        ds = tuple(sorted({k[0] for k in cells}))
        vs = tuple(sorted({k[1] for k in cells}))
        return cls(ds, vs, cells, metadata or {})


@dataclass
class SweepContext:
    spec: ScenarioSpec
    base: Network  # uncongested, p_min zeroed
    congested: Network
    periods: list[Period]
    weather: WeatherSeries
    conductors: ConductorConfig
    priority: list[int]
    baseline_loading: dict[int, float]


def _result_summary(period: Period, res: SolveResult) -> dict:
    inc = res.incumbent
    out = {
        "hour": period.hour,
        "weight": period.weight,
        "status": res.status,
        "objective": res.incumbent_objective if inc else None,
        "rel_gap": res.rel_gap if math.isfinite(res.rel_gap) else None,
        "nodes": res.nodes_explored,
    }
    if inc:
        out["flows"] = {str(k): v for k, v in inc.flows.items()}
        out["limits"] = {str(k): v for k, v in inc.limits.items()}
        out["cost_load_shedding"] = inc.cost_load_shedding
        out["topology"] = inc.topology
    return out


def prepare(spec: ScenarioSpec) -> SweepContext:
    """Stages 1 and 2: base case, congestion and line priority."""
    base = base_network(spec.case)
    weather = resolve_weather(spec.weather)
    periods = horizon(spec, base, weather)
    conductors = load_conductor_config(spec.conductors) if spec.conductors else ConductorConfig()
    fixed = dataclasses.replace(spec.formulation, topology_mode="fixed")
    base_sols = []
    if any(not l.rated for l in base.lines):
        for p in periods:
            r = solve_period(base, None, p, fixed, spec.solver)
            if r.incumbent is None:
                raise RuntimeError(f"base case has no solution at hour {p.hour}")
            base_sols.append(r.incumbent)
    congested = apply_congestion(base, base_sols, spec.congestion_factor)
    cong_sols = []
    for p in periods:
        r = solve_period(congested, None, p, fixed, spec.solver)
        if r.incumbent is None:
            raise RuntimeError(f"congested baseline has no solution at hour {p.hour}")
        cong_sols.append(r.incumbent)
    weights = [p.weight for p in periods]
    loading = line_loading(cong_sols, None, weights)
    if spec.priority_list == "auto":
        priority = rank_priority_lines(congested, cong_sols, weights)
    else:
        priority = list(spec.priority_list)
        known = {l.id for l in congested.lines}
        if set(priority) - known:
            raise ValueError(f"priority list names unknown lines {sorted(set(priority) - known)}")
    top = max((*spec.dlr_counts, *spec.vid_counts), default=0)
    if top > len(priority):
        raise ValueError(f"counts up to {top} exceed the {len(priority)} ranked lines")
    return SweepContext(spec, base, congested, periods, weather, conductors, priority, loading)


def cell_network(ctx: SweepContext, d: int, v: int) -> Network:
    return ctx.congested.equip(dlr=ctx.priority[:d], vid=ctx.priority[:v])


def cell_ratings(ctx: SweepContext, net: Network) -> RatingSeries:
    return build_rating_series(net, period_weather(ctx.periods), ctx.conductors, hours=[p.hour for p in ctx.periods])


def run_cell(ctx: SweepContext, d: int, v: int) -> CellResult:
    t0 = time.perf_counter()
    net = cell_network(ctx, d, v)
    ratings = cell_ratings(ctx, net)
    total, gap, worst, summaries = 0.0, 0.0, "optimal_within_gap", []
    for p in ctx.periods:
        res = solve_period(net, ratings, p, ctx.spec.formulation, ctx.spec.solver)
        summaries.append(_result_summary(p, res))
        if res.incumbent is None:
            total, worst = math.nan, res.status
            continue
        total += p.weight * res.incumbent_objective
        gap = max(gap, res.rel_gap)
        if res.status != "optimal_within_gap":
            worst = res.status
    return CellResult(d, v, total, gap, worst, summaries, time.perf_counter() - t0)


def _cell_path(out_dir: Path, ctx: SweepContext, d: int, v: int) -> Path:
    return out_dir / "cells" / f"cell_d{d:02d}_v{v:02d}.json"


def _run_cell_job(args):
    ctx, d, v = args
    return run_cell(ctx, d, v)


def run_sweep(spec: ScenarioSpec, out_dir: str | Path | None = None, workers: int = 1,
              loading_cells: Sequence[tuple[int, int]] | None = None):
    """Run every (DLR, VID) cell; returns ``(CostMatrix, {cell: LoadingReport}, context)``.

    With ``out_dir`` each finished cell is stored as JSON and reused on the
    next call with the same scenario digest, so an interrupted sweep resumes.
    """
    ctx = prepare(spec)
    digest = spec.digest()
    cells: dict[tuple[int, int], CellResult] = {}
    todo = []
    out = Path(out_dir) if out_dir is not None else None
    for d in spec.dlr_counts:
        for v in spec.vid_counts:
            if out is not None:
                path = _cell_path(out, ctx, d, v)
                if path.exists():
                    data = json.loads(path.read_text())
                    if data.get("digest") == digest:
                        cell = CellResult.from_dict(data["cell"])
                        timing = path.with_suffix(".time")
                        cell.runtime = float(timing.read_text()) if timing.exists() else 0.0
                        cells[(d, v)] = cell
                        continue
            todo.append((d, v))

    def store(c: CellResult):
        cells[(c.dlr_lines, c.vid_lines)] = c
        log.info("cell d=%d v=%d objective=%.2f gap=%.5f status=%s (%.1fs)", c.dlr_lines, c.vid_lines,
                 c.objective, c.max_rel_gap, c.status, c.runtime)
        if out is not None:
            path = _cell_path(out, ctx, c.dlr_lines, c.vid_lines)
            path.parent.mkdir(parents=True, exist_ok=True)
            # wall time lives beside the cell so the JSON itself is reproducible
            cell = c.to_dict()
            cell.pop("runtime")
            path.write_text(json.dumps({"digest": digest, "cell": cell}, sort_keys=True, indent=1) + "\n")
            path.with_suffix(".time").write_text(f"{c.runtime:.3f}\n")

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for c in pool.map(_run_cell_job, [(ctx, d, v) for d, v in todo]):
                store(c)
    else:
        for d, v in todo:
            store(run_cell(ctx, d, v))

    meta = {
        "case": spec.case,
        "weather": ctx.weather.label,
        "congestion_factor": spec.congestion_factor,
        "topology_mode": spec.topology_mode,
        "rel_gap_target": spec.solver.rel_gap_target,
        "theta_max": spec.formulation.theta_max,
        "vid_range": spec.formulation.vid_range,
        "periods": [{"hour": p.hour, "weight": p.weight} for p in ctx.periods],
        "priority_rule": "baseline mean loading, descending, ties by id" if spec.priority_list == "auto" else "explicit",
        "priority_list": ctx.priority,
        "digest": digest,
    }
    cm = CostMatrix(spec.dlr_counts, spec.vid_counts, cells, meta)
    if loading_cells is None:
        dm, vm = spec.dlr_counts[-1], spec.vid_counts[-1]
        loading_cells = sorted({(dm, spec.vid_counts[0]), (spec.dlr_counts[0], vm), (dm, vm)})
    reports = {c: cell_loading(ctx, cells[c]) for c in loading_cells if c in cells}
    return cm, reports, ctx


def cell_loading(ctx: SweepContext, cell: CellResult) -> LoadingReport:
    """Mean loading of a cell against the congested baseline, from stored flows and limits."""
    treated: dict[int, float] = {}
    total = 0.0
    for p in cell.periods:
        if "flows" not in p:
            raise ValueError(f"cell ({cell.dlr_lines}, {cell.vid_lines}) has no solution at hour {p['hour']}")
        total += p["weight"]
        for k, flow in p["flows"].items():
            treated[int(k)] = treated.get(int(k), 0.0) + p["weight"] * abs(flow) / p["limits"][k]
    treated = {k: v / total for k, v in sorted(treated.items())}
    return LoadingReport(dict(ctx.baseline_loading), treated)


def runtimes(cm: CostMatrix) -> dict:
    return {f"{d},{v}": round(c.runtime, 3) for (d, v), c in sorted(cm.cells.items())}


def loading_csv(reports: dict[tuple[int, int], LoadingReport]) -> str:
    rows = ["dlr_lines,vid_lines,line,baseline,treated,delta"]
    for (d, v), rep in sorted(reports.items()):
        for lid in sorted(rep.treated):
            rows.append(f"{d},{v},{lid},{rep.baseline[lid]:.6f},{rep.treated[lid]:.6f},{rep.delta[lid]:.6f}")
    return "\n".join(rows) + "\n"

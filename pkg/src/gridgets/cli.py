"""Command-line entry point: ``gridgets {solve,rate,sweep,report}``.

Exit codes: 0 success, 1 input error (bad flags, unreadable or invalid
inputs, infeasible instance), 2 solver limit reached before the gap target,
3 internal error. Every run writes ``manifest.json`` into its output
directory. Numbers are printed in fixed-point notation.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
import traceback
from pathlib import Path

from . import __version__
from . import formulation as F
from .case_io import CaseFormatError, DATA_DIR, resolve_case_path
from .dlr import ConductorConfig, RatingConditions, build_rating_series, load_conductor_config, rating_factor
from .scenario import (
    CostMatrix,
    LoadingReport,
    ScenarioSpec,
    cell_network,
    cell_ratings,
    loading_csv,
    prepare,
    resolve_weather,
    run_sweep,
    runtimes,
    solve_period,
)
from .solver import SolverConfig

log = logging.getLogger("gridgets")

EXIT_OK, EXIT_INPUT, EXIT_LIMIT, EXIT_INTERNAL = 0, 1, 2, 3


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(p: argparse.ArgumentParser, case_required=True):
    p.add_argument("--config", help="JSON file of option defaults (flags override it)")
    p.add_argument("--out", help="output directory (default out/<command>)")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _model_opts(p: argparse.ArgumentParser, congestion: float):
    p.add_argument("--case", required=False, help="case file (.m or .json) or bundled name: case24, case118")
    p.add_argument("--weather", "--profile", dest="weather", default="high_wind",
                   help="weather profile: high_wind, low_wind, slr_ref or a CSV path")
    p.add_argument("--load-profile", default="rts_winter_weekday", help="bundled load profile name or CSV path")
    p.add_argument("--conductors", default=None, help="conductor JSON (default: bundled Drake)")
    p.add_argument("--congestion", type=float, default=congestion, help="line limit scale factor in (0, 1]")
    topo = p.add_mutually_exclusive_group()
    topo.add_argument("--fixed-topology", dest="topology", action="store_const", const="fixed")
    topo.add_argument("--optimize-topology", dest="topology", action="store_const", const="optimized")
    p.set_defaults(topology="fixed")
    p.add_argument("--priority", type=_ints, default=None, help="explicit line priority order")
    p.add_argument("--hours", default="auto", help="auto, hourly, blocks6 or comma-separated hours")
    p.add_argument("--theta-max", type=float, default=0.6)
    p.add_argument("--voll", type=float, default=2000.0)
    p.add_argument("--vid-range", type=float, default=0.1)
    p.add_argument("--cost-segments", type=int, default=8)
    p.add_argument("--gap", type=float, default=0.005)
    p.add_argument("--time-limit", type=float, default=None, help="seconds per solve")
    p.add_argument("--node-limit", type=int, default=None, help="nodes per solve")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridgets", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gridgets {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one hour or the whole horizon")
    _common(p)
    _model_opts(p, congestion=1.0)
    p.add_argument("--hour", type=int, default=None, help="single hour (default: whole horizon)")
    p.add_argument("--dlr", type=int, default=0, help="number of priority lines with DLR")
    p.add_argument("--vid", type=int, default=0, help="number of priority lines with VID")

    p = sub.add_parser("rate", help="hourly DLR rating factors")
    _common(p)
    p.add_argument("--case", default=None, help="optional case: also print per-line limits")
    p.add_argument("--weather", "--profile", dest="weather", default="high_wind",
                   help="weather profile: high_wind, low_wind, slr_ref or a CSV path")
    p.add_argument("--conductors", default=None)
    p.add_argument("--solar", action="store_true", help="include solar heating")

    p = sub.add_parser("sweep", help="DLR x VID cost matrix")
    _common(p)
    _model_opts(p, congestion=0.5)
    p.add_argument("--dlr", type=_ints, default=(0, 4, 8, 12, 16, 20), help="DLR line counts")
    p.add_argument("--vid", type=_ints, default=(0, 4, 8, 12, 16, 20), help="VID line counts")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--svg", action="store_true", help="also draw the cost matrix and loading figures")

    p = sub.add_parser("report", help="render a sweep output directory")
    _common(p)
    p.add_argument("source", help="directory written by 'sweep'")
    return parser


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        # config supplies defaults; explicitly given flags win
        cfg = json.loads(Path(args.config).read_text())
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------
def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _inputs(args) -> dict[str, str]:
    out = {}
    case = getattr(args, "case", None)
    if case:
        out["case"] = resolve_case_path(case)
    weather = getattr(args, "weather", None)
    if weather:
        p = Path(weather)
        out["weather"] = p if p.exists() else DATA_DIR / f"weather_{p.stem}.csv"
    profile = getattr(args, "load_profile", None)
    if profile:
        out["profile"] = Path(profile) if Path(profile).suffix else DATA_DIR / f"load_{profile}.csv"
    cond = getattr(args, "conductors", None)
    if cond is not None or getattr(args, "command", "") in ("rate", "solve", "sweep"):
        out["conductors"] = Path(cond) if cond else DATA_DIR / "conductor_drake.json"
    if getattr(args, "config", None):
        out["config"] = Path(args.config)
    return {k: {"path": str(p), "sha256": _sha256(p)} for k, p in out.items()}


def write_manifest(out_dir: Path, args, config: dict, outputs: list[str]) -> Path:
    manifest = {
        "command": args.command,
        "config": config,
        "inputs": _inputs(args),
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "outputs": sorted(outputs),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def _config(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("command",)}
    return json.loads(json.dumps(d, default=list))


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path("out") / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def _spec(args, dlr, vid) -> ScenarioSpec:
    if not args.case:
        raise InputError("--case is required")
    if args.hours in ("auto", "hourly", "blocks6"):
        hours = args.hours
    else:
        hours = _ints(args.hours)
    return ScenarioSpec(
        case=args.case,
        weather=args.weather,
        congestion_factor=args.congestion,
        dlr_counts=dlr,
        vid_counts=vid,
        topology_mode=args.topology,
        hours=hours,
        priority_list=tuple(args.priority) if args.priority else "auto",
        profile=args.load_profile,
        conductors=args.conductors,
        formulation=F.FormulationConfig(
            theta_max=args.theta_max, voll=args.voll, vid_range=args.vid_range, cost_segments=args.cost_segments
        ),
        solver=SolverConfig(rel_gap_target=args.gap, time_limit=args.time_limit, node_limit=args.node_limit),
    )


def cmd_solve(args) -> int:
    if args.hour is not None:
        args.hours = str(args.hour)
    spec = _spec(args, (args.dlr,), (args.vid,))
    ctx = prepare(spec)
    net = cell_network(ctx, args.dlr, args.vid)
    ratings = cell_ratings(ctx, net)
    out = _out_dir(args)
    code = EXIT_OK
    rows = ["hour,status,cost_generation,cost_load_shedding,objective_total,objective_model,rel_gap"]
    lines = []
    total = 0.0
    results = []
    for p in ctx.periods:
        res = solve_period(net, ratings, p, spec.formulation, spec.solver)
        d = res.to_dict()
        d.pop("wall_time")  # keeps solve.json reproducible
        results.append({"hour": p.hour, "weight": p.weight, **d})
        if res.incumbent is None:
            code = EXIT_INPUT if res.status == "infeasible" else EXIT_LIMIT
            rows.append(f"{p.hour},{res.status},,,,,")
            lines.append(f"hour {p.hour:2d}  {res.status}")
            continue
        if res.status != "optimal_within_gap":
            code = max(code, EXIT_LIMIT)
        s = res.incumbent
        total += p.weight * res.incumbent_objective
        rows.append(f"{p.hour},{res.status},{s.cost_generation:.2f},{s.cost_load_shedding:.2f},"
                    f"{s.objective_total:.2f},{res.incumbent_objective:.2f},{res.rel_gap:.6f}")
        topo = s.topology
        lines.append(
            f"hour {p.hour:2d}  C_gen {s.cost_generation:12.2f}  C_LS {s.cost_load_shedding:12.2f}  "
            f"C_obj {s.objective_total:12.2f}  gap {100 * res.rel_gap:7.4f}%  {res.status}"
            + (f"  split {len(topo['split_substations'])} open {len(topo['open_lines'])}"
               if spec.topology_mode == "optimized" else "")
        )
    (out / "solve.csv").write_text("\n".join(rows) + "\n")
    (out / "solve.json").write_text(json.dumps(results, indent=1, sort_keys=True) + "\n")
    write_manifest(out, args, {**_config(args), "scenario": spec.to_dict()}, ["solve.csv", "solve.json"])
    print("\n".join(lines))
    print(f"total model objective {total:.2f}")
    return code


def cmd_rate(args) -> int:
    weather = resolve_weather(args.weather)
    conductors = load_conductor_config(args.conductors) if args.conductors else ConductorConfig()
    out = _out_dir(args)
    rows = ["hour,temp_c,wind_mps,alpha,i_dlr_a,i_slr_a"]
    for s in weather.samples:
        w = RatingConditions(s.ambient_temp, s.wind_speed, solar=args.solar, hour_of_day=s.hour % 24)
        rf = rating_factor(conductors.default, w)
        rows.append(f"{s.hour},{s.ambient_temp:.2f},{s.wind_speed:.2f},{rf.alpha:.6f},{rf.i_dlr:.3f},{rf.i_slr:.3f}")
    text = "\n".join(rows) + "\n"
    (out / "ratings.csv").write_text(text)
    outputs = ["ratings.csv"]
    if args.case:
        from .case_io import load_case

        net = load_case(args.case)
        net = net.equip(dlr=[l.id for l in net.lines])
        series = build_rating_series(net, weather, conductors, solar=args.solar)
        lim = ["hour,line,limit_mw"]
        for h in series.hours:
            for lid, p in sorted(series.at_hour(h).items()):
                lim.append(f"{h},{lid},{p:.3f}")
        (out / "line_limits.csv").write_text("\n".join(lim) + "\n")
        outputs.append("line_limits.csv")
    write_manifest(out, args, _config(args), outputs)
    print(text, end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _spec(args, args.dlr, args.vid)
    out = _out_dir(args)
    cm, reports, ctx = run_sweep(spec, out_dir=out, workers=args.workers)
    (out / "cost_matrix.csv").write_text(cm.to_csv())
    (out / "cost_matrix.json").write_text(json.dumps(cm.to_dict(), indent=1, sort_keys=True) + "\n")
    (out / "loading_report.csv").write_text(loading_csv(reports))
    (out / "runtimes.json").write_text(json.dumps(runtimes(cm), indent=1, sort_keys=True) + "\n")
    outputs = ["cost_matrix.csv", "cost_matrix.json", "loading_report.csv", "runtimes.json", "cells/"]
    if args.svg:
        from .report import cost_matrix_svg, loading_svg

        cost_matrix_svg(cm, out / "cost_matrix.svg")
        outputs.append("cost_matrix.svg")
        for (d, v), rep in sorted(reports.items()):
            name = f"loading_d{d}_v{v}.svg"
            loading_svg(rep, out / name, f"DLR {d}, VID {v}")
            outputs.append(name)
    write_manifest(out, args, {**_config(args), "scenario": spec.to_dict()}, outputs)
    from .report import cost_matrix_markdown

    print(cost_matrix_markdown(cm), end="")
    limited = [c for c in cm.cells.values() if c.status != "optimal_within_gap"]
    return EXIT_LIMIT if limited else EXIT_OK


def _read_loading(path: Path) -> dict[tuple[int, int], LoadingReport]:
    reports: dict[tuple[int, int], LoadingReport] = {}
    lines = path.read_text().strip().splitlines()
    for row in lines[1:]:
        d, v, lid, b, t, _ = row.split(",")
        r = reports.setdefault((int(d), int(v)), LoadingReport({}, {}))
        r.baseline[int(lid)] = float(b)
        r.treated[int(lid)] = float(t)
    return reports


def cmd_report(args) -> int:
    src = Path(args.source)
    if not (src / "manifest.json").exists():
        raise InputError(f"{src} has no manifest.json")
    manifest = json.loads((src / "manifest.json").read_text())
    if manifest.get("command") != "sweep":
        raise InputError(f"{src} was written by '{manifest.get('command')}', not 'sweep'")
    meta = json.loads((src / "cost_matrix.json").read_text())["metadata"] if (src / "cost_matrix.json").exists() else {}
    cm = CostMatrix.from_csv((src / "cost_matrix.csv").read_text(), meta)
    reports = _read_loading(src / "loading_report.csv") if (src / "loading_report.csv").exists() else {}
    out = Path(args.out) if args.out else src / "report"
    out.mkdir(parents=True, exist_ok=True)
    from .report import cost_matrix_markdown, cost_matrix_svg, loading_markdown, loading_svg

    md = [f"# Sweep report: {meta.get('case', '')}", ""]
    if meta:
        md += [
            f"- weather: {meta.get('weather')}",
            f"- topology: {meta.get('topology_mode')}",
            f"- congestion factor: {meta.get('congestion_factor')}",
            f"- gap target: {meta.get('rel_gap_target')}",
            f"- priority: {meta.get('priority_rule')}",
            "",
        ]
    md += ["## Cost matrix", "", cost_matrix_markdown(cm)]
    outputs = ["report.md", "cost_matrix.svg"]
    if reports:
        md += ["## Mean line loading", "", loading_markdown(reports)]
        for (d, v), rep in sorted(reports.items()):
            name = f"loading_d{d}_v{v}.svg"
            loading_svg(rep, out / name, f"DLR {d}, VID {v}")
            outputs.append(name)
    (out / "report.md").write_text("\n".join(md))
    cost_matrix_svg(cm, out / "cost_matrix.svg")
    write_manifest(out, args, _config(args), outputs)
    print("\n".join(md))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "rate": cmd_rate, "sweep": cmd_sweep, "report": cmd_report}


def dispatch(argv=None) -> int:
    try:
        args = _parse(argv)
    except InputError as exc:
        print(f"gridgets: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"gridgets: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InputError, CaseFormatError, F.FormulationError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"gridgets: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()

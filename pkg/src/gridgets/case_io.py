"""Case, load-profile and weather ingestion.

Two case formats are understood:

* a read-only subset of the MATPOWER ``.m`` syntax: ``mpc.baseMVA`` and the
  ``bus``, ``gen``, ``branch`` and ``gencost`` tables (version 2 column
  layout, polynomial gencost only);
* a native JSON schema, which is also the canonical serialization::

    {"name": str, "base_mva": float,
     "substations": [{"id", "is_reference"}],
     "lines": [{"id", "from_sub", "to_sub", "susceptance_nominal",
                "p_max_static", "vid_equipped", "dlr_equipped", "rated"}],
     "generators": [{"id", "substation", "p_min", "p_max",
                     "cost_quadratic", "cost_linear", "cost_constant"}],
     "demands": [{"id", "substation", "p_max_nominal", "multiplier"}]}

MATPOWER mapping: every bus becomes a substation (id = bus number), branch
``k`` (1-based, in-service rows only) becomes line ``k`` with
``susceptance_nominal = 1/x`` and ``p_max_static = rateA``; buses with
``Pd > 0`` yield one demand each (id = bus number); in-service generator
``k`` becomes generator ``k``. Reactive data, voltages and tap ratios are
read and ignored.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .network import (
    Demand,
    Generator,
    Line,
    LoadProfile,
    Network,
    Substation,
    WeatherSample,
    WeatherSeries,
)

log = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
BUNDLED_CASES = {
    "case24": "case24_ieee_rts.m",
    "case24_ieee_rts": "case24_ieee_rts.m",
    "case118": "case118.m",
}

# MATPOWER column positions (0-based)
BUS_I, BUS_TYPE, PD, QD = 0, 1, 2, 3
GEN_BUS, PG, QG, GEN_STATUS, PMAX, PMIN = 0, 1, 2, 7, 8, 9
F_BUS, T_BUS, BR_X, RATE_A, RATE_B, RATE_C, BR_STATUS = 0, 1, 3, 5, 6, 7, 10


class CaseFormatError(ValueError):
    """Malformed or inconsistent case input."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    element: str = ""

    def __str__(self):
        return f"[{self.code}] {self.message}"


# ---------------------------------------------------------------------------
# MATPOWER subset
# ---------------------------------------------------------------------------
_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?$")
_ASSIGN = re.compile(r"mpc\.(\w+)\s*=\s*")


def _strip_comment(line: str) -> str:
    # '%' never appears inside the numeric tables we parse; quoted strings only
    # occur in skipped assignments
    in_quote = False
    for i, ch in enumerate(line):
        if ch == "'":
            in_quote = not in_quote
        elif ch == "%" and not in_quote:
            return line[:i]
    return line


def _read_tables(text: str) -> tuple[dict[str, list[list[float]]], dict[str, float]]:
    lines = text.splitlines()
    tables: dict[str, list[list[float]]] = {}
    scalars: dict[str, float] = {}
    i = 0
    while i < len(lines):
        raw = _strip_comment(lines[i])
        m = _ASSIGN.search(raw)
        if not m:
            i += 1
            continue
        name = m.group(1)
        rest = raw[m.end():]
        start_col = m.end() + 1
        if rest.lstrip().startswith("["):
            col0 = raw.index("[", m.end()) + 1
            rows, i = _read_matrix(lines, i, col0, name)
            tables[name] = rows
            continue
        if rest.lstrip().startswith("{"):
            # cell arrays (bus names etc.) are skipped
            depth = 0
            while i < len(lines):
                seg = _strip_comment(lines[i])
                depth += seg.count("{") - seg.count("}")
                i += 1
                if depth <= 0:
                    break
            continue
        value = rest.strip().rstrip(";").strip()
        if _NUMBER.match(value):
            scalars[name] = float(value)
        elif not (value.startswith("'") and value.endswith("'")):
            raise CaseFormatError(f"unsupported assignment to mpc.{name}", i + 1, start_col)
        i += 1
    return tables, scalars


def _read_matrix(lines: list[str], i: int, col0: int, name: str) -> tuple[list[list[float]], int]:
    rows: list[list[float]] = []
    current: list[float] = []
    first = True
    start = i
    while i < len(lines):
        seg = _strip_comment(lines[i])
        offset = 0
        if first:
            offset, seg = col0, seg[col0:]
            first = False
        done = False
        continued = "..." in seg
        for m in re.finditer(r"[^\s,;\]]+|;|\]", seg):
            tok = m.group(0)
            if tok == "]":
                done = True
                break
            if tok == ";":
                if current:
                    rows.append(current)
                current = []
                continue
            if tok == "...":
                continue
            if not _NUMBER.match(tok):
                raise CaseFormatError(f"bad number {tok!r} in mpc.{name}", i + 1, offset + m.start() + 1)
            current.append(float(tok))
        if current and not done and not continued:
            # newline also terminates a row
            rows.append(current)
            current = []
        i += 1
        if done:
            if current:
                rows.append(current)
            break
    else:
        raise CaseFormatError(f"unterminated matrix mpc.{name}", start + 1, col0)
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise CaseFormatError(f"ragged rows in mpc.{name}: widths {sorted(widths)}", start + 1, col0)
    return rows, i


def parse_matpower(text: str, name: str = "case") -> Network:
    """Parse the supported MATPOWER subset into a :class:`Network`."""
    tables, scalars = _read_tables(text)
    for required in ("bus", "gen", "branch"):
        if required not in tables:
            raise CaseFormatError(f"missing table mpc.{required}")
    base_mva = scalars.get("baseMVA", 100.0)
    buses, gens, branches = tables["bus"], tables["gen"], tables["branch"]
    gencost = tables.get("gencost")

    if any(len(r) < 13 for r in buses):
        raise CaseFormatError("mpc.bus rows need at least 13 columns")
    if any(len(r) < 10 for r in gens):
        raise CaseFormatError("mpc.gen rows need at least 10 columns")
    if any(len(r) < 11 for r in branches):
        raise CaseFormatError("mpc.branch rows need at least 11 columns")

    bus_ids = [int(r[BUS_I]) for r in buses]
    seen: set[int] = set()
    for b in bus_ids:
        if b in seen:
            raise CaseFormatError(f"duplicate bus id {b}")
        seen.add(b)

    if any(r[QD] != 0 for r in buses) or any(r[QG] != 0 for r in gens):
        log.warning("reactive power data in %s is ignored (DC model)", name)

    ref_buses = [int(r[BUS_I]) for r in buses if int(r[BUS_TYPE]) == 3]

    generators = []
    for k, row in enumerate(gens, start=1):
        if row[GEN_STATUS] <= 0:
            continue
        bus = int(row[GEN_BUS])
        if bus not in seen:
            raise CaseFormatError(f"generator {k} references unknown bus {bus}")
        c2 = c1 = c0 = 0.0
        if gencost is not None:
            if k - 1 >= len(gencost):
                raise CaseFormatError(f"no gencost row for generator {k}")
            c2, c1, c0 = _poly_cost(gencost[k - 1], k)
        generators.append(Generator(k, bus, row[PMIN], row[PMAX], c2, c1, c0))

    total_cap = sum(g.p_max for g in generators)
    lines = []
    for k, row in enumerate(branches, start=1):
        if row[BR_STATUS] <= 0:
            continue
        fb, tb = int(row[F_BUS]), int(row[T_BUS])
        for b in (fb, tb):
            if b not in seen:
                raise CaseFormatError(f"branch {k} references unknown bus {b}")
        x = row[BR_X]
        if x == 0:
            raise CaseFormatError(f"branch {k} has zero reactance")
        rate = row[RATE_A]
        rated = rate > 0
        if not rated:
            # unrated in MATPOWER: no DC flow can exceed the total generation capacity
            rate = max(total_cap, 1.0)
        lines.append(Line(k, fb, tb, 1.0 / x, rate, rated=rated))

    demands = [Demand(int(r[BUS_I]), int(r[BUS_I]), r[PD]) for r in buses if r[PD] > 0]
    if any(r[PD] < 0 for r in buses):
        log.warning("negative bus loads in %s are ignored", name)

    if len(ref_buses) == 1:
        ref = ref_buses[0]
    else:
        cap = {b: 0.0 for b in bus_ids}
        for g in generators:
            cap[g.substation] += g.p_max
        ref = min(bus_ids, key=lambda b: (-cap[b], b))
    subs = [Substation(b, b == ref) for b in bus_ids]
    return Network(tuple(subs), tuple(lines), tuple(generators), tuple(demands), base_mva, name)


def _poly_cost(row: list[float], k: int) -> tuple[float, float, float]:
    model = int(row[0])
    if model != 2:
        raise CaseFormatError(f"gencost row {k}: only polynomial (model 2) costs are supported")
    n = int(row[3])
    coeffs = row[4 : 4 + n]
    if len(coeffs) != n:
        raise CaseFormatError(f"gencost row {k}: expected {n} coefficients")
    if n > 3:
        if any(c != 0 for c in coeffs[: n - 3]):
            raise CaseFormatError(f"gencost row {k}: polynomial degree above 2 is not supported")
        coeffs = coeffs[n - 3 :]
    coeffs = [0.0] * (3 - len(coeffs)) + list(coeffs)
    return coeffs[0], coeffs[1], coeffs[2]


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------
def network_to_dict(net: Network) -> dict:
    return {
        "name": net.name,
        "base_mva": net.base_mva,
        "substations": [dataclasses.asdict(s) for s in net.substations],
        "lines": [dataclasses.asdict(l) for l in net.lines],
        "generators": [dataclasses.asdict(g) for g in net.generators],
        "demands": [dataclasses.asdict(d) for d in net.demands],
    }


def serialize_case(net: Network) -> str:
    return json.dumps(network_to_dict(net), indent=1, sort_keys=True)


def parse_json(text: str) -> Network:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    try:
        net = Network(
            tuple(Substation(**s) for s in data["substations"]),
            tuple(Line(**l) for l in data["lines"]),
            tuple(Generator(**g) for g in data["generators"]),
            tuple(Demand(**d) for d in data["demands"]),
            float(data.get("base_mva", 100.0)),
            data.get("name", "network"),
        )
    except (KeyError, TypeError) as exc:
        raise CaseFormatError(f"bad case JSON: {exc}") from None
    for kind in ("substations", "lines", "generators", "demands"):
        ids = [e.id for e in getattr(net, kind)]
        if len(ids) != len(set(ids)):
            raise CaseFormatError(f"duplicate id among {kind}")
    dangling = [d for d in validate_network(net, connectivity=False) if d.code == "dangling-reference"]
    if dangling:
        raise CaseFormatError(str(dangling[0]))
    if any(l.susceptance_nominal == 0 for l in net.lines):
        raise CaseFormatError("line with zero susceptance")
    return net


def parse_case(text: str, name: str = "case") -> Network:
    """Parse case text, detecting JSON vs MATPOWER by the first character."""
    if text.lstrip().startswith("{"):
        return parse_json(text)
    return parse_matpower(text, name)


def resolve_case_path(case: str | Path) -> Path:
    p = Path(case)
    if p.exists():
        return p
    key = p.stem if p.suffix in (".m", ".json") else str(case)
    if key in BUNDLED_CASES:
        return DATA_DIR / BUNDLED_CASES[key]
    if (DATA_DIR / p.name).exists():
        return DATA_DIR / p.name
    raise FileNotFoundError(f"case file not found: {case}")


def load_case(case: str | Path) -> Network:
    """Read a case from a path or a bundled case name (``case24``, ``case118``)."""
    path = resolve_case_path(case)
    return parse_case(path.read_text(), path.stem)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------
def validate_network(net: Network, connectivity: bool = True) -> list[Diagnostic]:
    """Check every Network invariant; an empty list means the network is valid."""
    out: list[Diagnostic] = []
    sub_ids = [s.id for s in net.substations]
    subs = set(sub_ids)
    for kind in ("substations", "lines", "generators", "demands"):
        ids = [e.id for e in getattr(net, kind)]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        for i in dup:
            out.append(Diagnostic("duplicate-id", f"duplicate {kind[:-1]} id {i}", f"{kind}:{i}"))
    n_ref = sum(s.is_reference for s in net.substations)
    if n_ref != 1:
        out.append(Diagnostic("reference", f"expected exactly one reference substation, found {n_ref}"))
    for l in net.lines:
        for end in (l.from_sub, l.to_sub):
            if end not in subs:
                out.append(
                    Diagnostic("dangling-reference", f"line {l.id} references unknown substation {end}", f"line:{l.id}")
                )
        if l.susceptance_nominal == 0:
            out.append(Diagnostic("line-susceptance", f"line {l.id} has zero susceptance", f"line:{l.id}"))
        if not l.p_max_static > 0:
            out.append(Diagnostic("line-rating", f"line {l.id} has nonpositive rating", f"line:{l.id}"))
    for g in net.generators:
        if g.substation not in subs:
            out.append(
                Diagnostic(
                    "dangling-reference", f"generator {g.id} references unknown substation {g.substation}", f"gen:{g.id}"
                )
            )
        if not 0 <= g.p_min <= g.p_max:
            out.append(Diagnostic("generator-limits", f"generator {g.id} violates 0 <= p_min <= p_max", f"gen:{g.id}"))
        if g.cost_quadratic < 0:
            out.append(Diagnostic("generator-cost", f"generator {g.id} has negative quadratic cost", f"gen:{g.id}"))
    for d in net.demands:
        if d.substation not in subs:
            out.append(
                Diagnostic(
                    "dangling-reference", f"demand {d.id} references unknown substation {d.substation}", f"demand:{d.id}"
                )
            )
        if d.p_max_nominal < 0 or d.multiplier < 0:
            out.append(Diagnostic("demand-negative", f"demand {d.id} is negative", f"demand:{d.id}"))
    # incidence consistency
    for b in sub_ids:
        if any(net.generator(g).substation != b for g in net.generators_at(b)):
            out.append(Diagnostic("incidence", f"generator set of substation {b} is inconsistent"))
        if any(net.demand(d).substation != b for d in net.demands_at(b)):
            out.append(Diagnostic("incidence", f"demand set of substation {b} is inconsistent"))
    if connectivity and subs:
        comps = connected_components(net)
        if len(comps) > 1:
            desc = "; ".join("{" + ", ".join(str(s) for s in c) + "}" for c in comps)
            out.append(Diagnostic("connectivity", f"network has {len(comps)} components: {desc}"))
    return out


def connected_components(net: Network) -> list[list[int]]:
    """Components of the all-lines-closed, busbars-merged graph (union-find)."""
    parent = {s.id: s.id for s in net.substations}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for l in net.lines:
        if l.from_sub in parent and l.to_sub in parent:
            ra, rb = find(l.from_sub), find(l.to_sub)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for s in net.substations:
        groups.setdefault(find(s.id), []).append(s.id)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


# ---------------------------------------------------------------------------
# load and weather
# ---------------------------------------------------------------------------
def scale_demands(net: Network, profile: LoadProfile, hour: int) -> Network:
    """Copy of ``net`` whose demands use the multiplier for ``hour``."""
    if not 0 <= hour < 24:
        raise ValueError(f"hour must be in [0, 24), got {hour}")
    m = profile.multipliers[hour]
    return net.replace(demands=tuple(dataclasses.replace(d, multiplier=m) for d in net.demands))


def _read_csv(source: str | Path, header: tuple[str, ...]) -> list[dict[str, str]]:
    text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != header:
        raise CaseFormatError(f"expected CSV header {','.join(header)}, got {reader.fieldnames}", 1, 1)
    rows = list(reader)
    for n, row in enumerate(rows, start=2):
        for k in header:
            try:
                float(row[k])
            except (TypeError, ValueError):
                raise CaseFormatError(f"bad value {row[k]!r} in column {k}", n, header.index(k) + 1) from None
    return rows


def load_profile(source: str | Path) -> LoadProfile:
    """Read a ``hour,multiplier`` CSV (file path or CSV text) with 24 rows."""
    rows = _read_csv(source, ("hour", "multiplier"))
    hours = [int(float(r["hour"])) for r in rows]
    if sorted(hours) != list(range(24)):
        raise CaseFormatError("load profile must list hours 0..23 exactly once")
    by_hour = {int(float(r["hour"])): float(r["multiplier"]) for r in rows}
    return LoadProfile(tuple(by_hour[h] for h in range(24)))


def load_weather(source: str | Path, label: str = "custom") -> WeatherSeries:
    """Read an ``hour,temp_c,wind_mps`` CSV (file path or CSV text)."""
    rows = _read_csv(source, ("hour", "temp_c", "wind_mps"))
    samples = tuple(
        WeatherSample(int(float(r["hour"])), float(r["temp_c"]), float(r["wind_mps"])) for r in rows
    )
    return WeatherSeries(samples, label)


def weather_to_csv(series: WeatherSeries) -> str:
    lines = ["hour,temp_c,wind_mps"]
    lines += [f"{s.hour},{s.ambient_temp:.2f},{s.wind_speed:.2f}" for s in series.samples]
    return "\n".join(lines) + "\n"


def bundled_profile(name: str = "rts_winter_weekday") -> LoadProfile:
    return load_profile(DATA_DIR / f"load_{name}.csv")


def bundled_weather(name: str) -> WeatherSeries:
    path = DATA_DIR / f"weather_{name}.csv"
    if not path.exists():
        raise FileNotFoundError(f"no bundled weather profile {name!r}")
    return load_weather(path, label=f"{name} (synthetic)" if name != "slr_ref" else name)

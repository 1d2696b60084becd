"""Node-breaker co-optimization problem as a solver-agnostic linear model.

Every substation has two busbars. Binary decisions (paper convention):

* ``h_b[b]``     1 when the coupler between the two busbars is closed (merged)
* ``h_g[g]``     generator on busbar 2 (0: busbar 1)
* ``h_d[d]``     demand on busbar 2
* ``h_le[l,e]``  end ``e`` of line ``l`` on busbar 2
* ``h_l[l]``     line closed

All quantities are per-unit on the case base (angles in rad); the objective
is in $/h. Each row carries a provenance tag naming the modelling equation
it implements; :data:`TAG_GROUPS` lists them.

The VID flow law ``P = (b + db) * delta`` carries the product ``w = db *
delta`` as an auxiliary variable. Its McCormick rows are not stored in
``constraints``; they are generated from :attr:`Formulation.bilinear` so
the solver can re-derive them for each node's box.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

from .network import Network
from .relax import BilinearTerm, mccormick_envelope

BINARY_PREFIXES = ("h_b[", "h_g[", "h_d[", "h_le[", "h_l[")

# tag -> modelling component
TAG_GROUPS = {
    "DC": "DC power flow",
    "max_voltage": "busbar angle coupling",
    "Pgmax_1": "generator on busbar 1",
    "Pgmax_2": "generator on busbar 2",
    "Pdmax_1": "demand on busbar 1",
    "Pdmax_2": "demand on busbar 2",
    "Plmax_1": "line end on busbar 1",
    "Plmax_2": "line end on busbar 2",
    "hl_max": "open line carries no flow",
    "hl": "line end follows line status",
    "sumPl": "flow split over busbars",
    "Pf_NTO": "big-M switched flow law",
    "theta_max_1": "line end angle, busbar 1",
    "theta_max_2": "line end angle, busbar 2",
    "hg1": "generator assignment needs split",
    "hd1": "demand assignment needs split",
    "hle1": "line end assignment needs split",
    "balance1": "busbar 1 power balance",
    "balance2": "busbar 2 power balance",
    "DLR_Cons": "dynamic rating limit",
    "VID": "variable susceptance product",
    "rangeb": "susceptance deviation range",
    "gen_cost": "generation cost",
    "load_curtail": "load shedding cost",
    "ref_pin": "angle reference",
}


class FormulationError(ValueError):
    pass


@dataclass(frozen=True)
class FormulationConfig:
    theta_max: float = 0.6
    voll: float = 2000.0
    big_m: str | float | Mapping[int, float] = "auto"
    vid_range: float = 0.1
    cost_segments: int = 8
    topology_mode: str = "fixed"
    strict_paper_balance: bool = False
    allow_shedding: bool = True

    def __post_init__(self):
        if not self.theta_max > 0:
            raise FormulationError("theta_max must be positive")
        if not self.voll > 0:
            raise FormulationError("VOLL must be positive")
        if not 0 <= self.vid_range <= 1:
            raise FormulationError("vid_range must lie in [0, 1]")
        if self.cost_segments < 1:
            raise FormulationError("cost_segments must be at least 1")
        if self.topology_mode not in ("fixed", "optimized"):
            raise FormulationError("topology_mode must be 'fixed' or 'optimized'")


@dataclass
class Variable:
    name: str
    lb: float
    ub: float
    binary: bool = False
    tag: str = ""


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[tuple[str, float], ...]
    sense: str  # "<=", ">=", "=="
    rhs: float
    tag: str

    def activity(self, values: Mapping[str, float]) -> float:
        return sum(c * values[v] for v, c in self.coeffs)

    def violation(self, values: Mapping[str, float]) -> float:
        a = self.activity(values)
        if self.sense == "<=":
            return max(0.0, a - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - a)
        return abs(a - self.rhs)


@dataclass
class Formulation:
    variables: list[Variable]
    constraints: list[Constraint]
    objective: dict[str, float]
    objective_constant: float
    bilinear: list[BilinearTerm]
    net: Network
    config: FormulationConfig
    limits: dict[int, float]  # per-unit line limits in force
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._index = {v.name: i for i, v in enumerate(self.variables)}

    def var(self, name: str) -> Variable:
        return self.variables[self._index[name]]

    def index(self, name: str) -> int:
        return self._index[name]

    def has_var(self, name: str) -> bool:
        return name in self._index

    @property
    def binaries(self) -> list[Variable]:
        return [v for v in self.variables if v.binary]

    def envelope_constraints(self, terms=None) -> list[Constraint]:
        """Rows (tag ``VID``) relaxing each product over its box.

        Six rows per term, in a fixed order: the four McCormick inequalities
        followed by the lower and upper bound of the angle difference.
        """
        rows = []
        for t in terms if terms is not None else self.bilinear:
            fr, to = t.y_vars
            for r in mccormick_envelope(t):
                coeffs = [(t.aux_var, 1.0), (t.x_var, r.cx), (fr, r.cy), (to, -r.cy)]
                rows.append(Constraint(tuple(coeffs), r.sense, r.rhs, "VID"))
            rows.append(Constraint(((fr, 1.0), (to, -1.0)), ">=", t.y_bounds[0], "VID"))
            rows.append(Constraint(((fr, 1.0), (to, -1.0)), "<=", t.y_bounds[1], "VID"))
        return rows

    def all_constraints(self) -> list[Constraint]:
        return self.constraints + self.envelope_constraints()

    def tags(self) -> set[str]:
        """Provenance tags over rows, variable bounds and objective terms."""
        out = {c.tag for c in self.all_constraints()}
        out |= {v.tag for v in self.variables if v.tag}
        out |= set(self.meta.get("objective_tags", ()))
        return out

    def copy(self, **changes) -> "Formulation":
        f = replace(self, **changes)
        return f

    def dump(self) -> str:
        """LP-style text export with provenance comments."""
        out = [f"\\ formulation {self.meta.get('case', '')} hour={self.meta.get('hour')} "
               f"mode={self.config.topology_mode}", "Minimize"]
        terms = " + ".join(f"{c:.10g} {v}" for v, c in self.objective.items() if c)
        out.append(f" obj: {terms} + {self.objective_constant:.10g}")
        out.append("Subject To")
        for i, c in enumerate(self.all_constraints()):
            lhs = " + ".join(f"{k:.10g} {v}" for v, k in c.coeffs)
            op = {"<=": "<=", ">=": ">=", "==": "="}[c.sense]
            out.append(f" c{i}: {lhs} {op} {c.rhs:.10g}  \\ {c.tag}")
        out.append("Bounds")
        for v in self.variables:
            note = f"  \\ {v.tag}" if v.tag else ""
            out.append(f" {v.lb:.10g} <= {v.name} <= {v.ub:.10g}{note}")
        bins = [v.name for v in self.variables if v.binary]
        if bins:
            out.append("Binaries")
            out.append(" " + " ".join(bins))
        out.append("End")
        return "\n".join(out) + "\n"


def big_m_value(cfg: FormulationConfig, line_id: int, b: float, r: float, p_max: float) -> float:
    if cfg.big_m == "auto":
        return abs(b) * (1 + r) * 2 * cfg.theta_max + p_max
    if isinstance(cfg.big_m, Mapping):
        return float(cfg.big_m[line_id])
    return float(cfg.big_m)


def delta_bounds(cfg: FormulationConfig, b: float, r: float, p_max: float, closed_fixed: bool) -> tuple[float, float]:
    """Angle-difference box for the McCormick term.

    The flow-limit bound is only valid while the line is known to be closed.
    """
    d = 2 * cfg.theta_max
    if closed_fixed and r < 1:
        d = min(d, p_max / ((1 - r) * abs(b)))
    return (-d, d)


def build(net: Network, ratings=None, cfg: FormulationConfig = FormulationConfig(), hour: int = 0,
          assignment: Mapping[str, int] | None = None) -> Formulation:
    """Assemble the co-optimization problem for one hour.

    ``ratings`` is a :class:`~gridgets.dlr.RatingSeries` (or ``None`` for
    static ratings). In ``fixed`` topology mode the nominal topology (or
    ``assignment``) is substituted for every binary.
    """
    base = net.base_mva
    th = cfg.theta_max
    V: list[Variable] = []
    C: list[Constraint] = []
    obj: dict[str, float] = {}
    const = 0.0

    def var(name, lb, ub, binary=False, tag=""):
        V.append(Variable(name, lb, ub, binary, tag))
        return name

    def row(coeffs, sense, rhs, tag):
        C.append(Constraint(tuple((v, float(c)) for v, c in coeffs if c != 0), sense, float(rhs), tag))

    limits: dict[int, float] = {}
    for l in net.lines:
        if ratings is None:
            p = l.p_max_static
        else:
            try:
                p = ratings.limit(l.id, hour)
            except KeyError:
                raise FormulationError(f"no rating for line {l.id} at hour {hour}") from None
        if not p > 0:
            raise FormulationError(f"line {l.id} has nonpositive limit {p}")
        limits[l.id] = p / base

    # -- substations -----------------------------------------------------
    for s in net.substations:
        var(f"theta_b[{s.id},1]", -th, th)
        var(f"theta_b[{s.id},2]", -th, th)
        var(f"h_b[{s.id}]", 0, 1, True)
        t1, t2, hb = f"theta_b[{s.id},1]", f"theta_b[{s.id},2]", f"h_b[{s.id}]"
        row([(t1, 1), (t2, -1), (hb, th)], "<=", th, "max_voltage")
        row([(t1, 1), (t2, -1), (hb, -th)], ">=", -th, "max_voltage")
    row([(f"theta_b[{net.reference.id},1]", 1)], "==", 0.0, "ref_pin")

    # -- generators --------------------------------------------------------
    for g in net.generators:
        pmin, pmax = g.p_min / base, g.p_max / base
        g1, g2, hg = f"P_g[{g.id},1]", f"P_g[{g.id},2]", f"h_g[{g.id}]"
        var(g1, 0, pmax)
        var(g2, 0, pmax)
        var(hg, 0, 1, True)
        row([(g1, 1), (hg, pmin)], ">=", pmin, "Pgmax_1")
        row([(g1, 1), (hg, pmax)], "<=", pmax, "Pgmax_1")
        row([(g2, 1), (hg, -pmin)], ">=", 0, "Pgmax_2")
        row([(g2, 1), (hg, -pmax)], "<=", 0, "Pgmax_2")
        row([(f"h_b[{g.substation}]", 1), (hg, 1)], "<=", 1, "hg1")
        # piecewise-linear secant approximation of the quadratic cost
        const += g.cost(g.p_min)
        width_mw = (g.p_max - g.p_min) / cfg.cost_segments
        link = [(g1, 1), (g2, 1)]
        if width_mw > 0:
            for k in range(cfg.cost_segments):
                a = g.p_min + k * width_mw
                slope = (g.cost(a + width_mw) - g.cost(a)) / width_mw  # $/MWh
                sk = var(f"seg[{g.id},{k}]", 0, width_mw / base)
                obj[sk] = slope * base
                link.append((sk, -1))
        row(link, "==", pmin, "gen_cost")

    # -- demands -----------------------------------------------------------
    for d in net.demands:
        pd = d.p_max / base
        d1, d2, hd = f"P_d[{d.id},1]", f"P_d[{d.id},2]", f"h_d[{d.id}]"
        var(d1, 0, pd)
        var(d2, 0, pd)
        var(hd, 0, 1, True)
        row([(d1, 1), (hd, pd)], "<=", pd, "Pdmax_1")
        row([(d2, 1), (hd, -pd)], "<=", 0, "Pdmax_2")
        row([(f"h_b[{d.substation}]", 1), (hd, 1)], "<=", 1, "hd1")
        row([(d1, 1), (d2, 1)], "<=" if cfg.allow_shedding else "==", pd, "load_curtail")
        obj[d1] = obj[d2] = -cfg.voll * base
        const += cfg.voll * d.p_max

    # -- lines ---------------------------------------------------------------
    # lines start with the loose angle box; fix_topology tightens closed ones
    bilinear: list[BilinearTerm] = []
    for l in net.lines:
        b = l.susceptance_nominal
        p = limits[l.id]
        r = cfg.vid_range if l.vid_equipped else 0.0
        M = big_m_value(cfg, l.id, b, r, p)
        pl, hl = f"P_l[{l.id}]", f"h_l[{l.id}]"
        var(pl, -p, p, tag="DLR_Cons")
        var(hl, 0, 1, True)
        row([(pl, 1), (hl, -p)], "<=", 0, "hl_max")
        row([(pl, 1), (hl, p)], ">=", 0, "hl_max")
        ends = {}
        for e, sub in (("fr", l.from_sub), ("to", l.to_sub)):
            p1, p2 = f"P_le[{l.id},{e},1]", f"P_le[{l.id},{e},2]"
            te, he = f"theta_le[{l.id},{e}]", f"h_le[{l.id},{e}]"
            var(p1, -p, p)
            var(p2, -p, p)
            var(te, -th, th)
            var(he, 0, 1, True)
            ends[e] = te
            row([(p1, 1), (he, p)], "<=", p, "Plmax_1")
            row([(p1, 1), (he, -p)], ">=", -p, "Plmax_1")
            row([(p2, 1), (he, -p)], "<=", 0, "Plmax_2")
            row([(p2, 1), (he, p)], ">=", 0, "Plmax_2")
            row([(p1, 1), (hl, -p)], "<=", 0, "hl_max")
            row([(p1, 1), (hl, p)], ">=", 0, "hl_max")
            row([(he, 1), (hl, -1)], "<=", 0, "hl")
            row([(pl, 1), (p1, -1), (p2, -1)], "==", 0, "sumPl")
            tb1, tb2 = f"theta_b[{sub},1]", f"theta_b[{sub},2]"
            row([(te, 1), (tb1, -1), (he, -th)], "<=", 0, "theta_max_1")
            row([(te, 1), (tb1, -1), (he, th)], ">=", 0, "theta_max_1")
            row([(te, 1), (tb2, -1), (he, th)], "<=", th, "theta_max_2")
            row([(te, 1), (tb2, -1), (he, -th)], ">=", -th, "theta_max_2")
            row([(f"h_b[{sub}]", 1), (he, 1)], "<=", 1, "hle1")
        flow = [(ends["fr"], b), (ends["to"], -b), (pl, -1)]
        if r > 0:
            db, w = f"db[{l.id}]", f"w[{l.id}]"
            xb = (-r * abs(b), r * abs(b))
            yb = delta_bounds(cfg, b, r, p, False)
            corners = [xb[i] * yb[j] for i in (0, 1) for j in (0, 1)]
            var(db, xb[0], xb[1], tag="rangeb")
            var(w, min(corners), max(corners))
            bilinear.append(BilinearTerm(l.id, xb, yb, w, db, (ends["fr"], ends["to"])))
            flow.append((w, 1))
        row(flow + [(hl, M)], "<=", M, "Pf_NTO")
        row(flow + [(hl, -M)], ">=", -M, "Pf_NTO")

    # -- busbar balance --------------------------------------------------------
    for s in net.substations:
        for i in (1, 2):
            coeffs = [(f"P_g[{g},{i}]", 1) for g in net.generators_at(s.id)]
            coeffs += [(f"P_d[{d},{i}]", -1) for d in net.demands_at(s.id)]
            if cfg.strict_paper_balance:
                coeffs += [(f"P_l[{l}]", -1) for l in net.lines_from(s.id)]
                coeffs += [(f"P_l[{l}]", 1) for l in net.lines_to(s.id)]
            else:
                coeffs += [(f"P_le[{l},fr,{i}]", -1) for l in net.lines_from(s.id)]
                coeffs += [(f"P_le[{l},to,{i}]", 1) for l in net.lines_to(s.id)]
            row(_merge(coeffs), "==", 0, f"balance{i}")

    f = Formulation(
        V, C, obj, const, bilinear, net, cfg, limits,
        meta={"hour": hour, "case": net.name, "objective_tags": ("gen_cost", "load_curtail")},
    )
    if cfg.topology_mode == "fixed":
        f = fix_topology(f, nominal_assignment(f) if assignment is None else assignment)
    elif assignment:
        f = fix_topology(f, assignment, partial=True)
    return f


def _merge(coeffs):
    acc: dict[str, float] = {}
    for v, c in coeffs:
        acc[v] = acc.get(v, 0.0) + c
    return list(acc.items())


def nominal_assignment(f: Formulation | Network) -> dict[str, int]:
    """Base-network topology: couplers closed, everything on busbar 1, lines closed."""
    net = f.net if isinstance(f, Formulation) else f
    a = {f"h_b[{s.id}]": 1 for s in net.substations}
    a.update({f"h_g[{g.id}]": 0 for g in net.generators})
    a.update({f"h_d[{d.id}]": 0 for d in net.demands})
    for l in net.lines:
        a[f"h_l[{l.id}]"] = 1
        a[f"h_le[{l.id},fr]"] = 0
        a[f"h_le[{l.id},to]"] = 0
    return a


EXCLUSIVITY_TAGS = ("hg1", "hd1", "hle1", "hl")


def fix_topology(f: Formulation, assignment: Mapping[str, int], partial: bool = False) -> Formulation:
    """Substitute binary values and fold the resulting rows.

    Rows left with a single continuous variable become bounds (keeping the
    row's tag on the variable); opposite inequalities with identical
    coefficients merge into equalities, and a merged flow law becomes a
    ``DC`` row. Raises :class:`FormulationError` for an incomplete assignment
    (unless ``partial``) or one that violates the coupling rows.
    """
    bins = {v.name for v in f.variables if v.binary}
    unknown = set(assignment) - bins
    if unknown:
        raise FormulationError(f"assignment names non-binary variables: {sorted(unknown)[:5]}")
    if not partial and set(assignment) != bins:
        missing = sorted(bins - set(assignment))
        raise FormulationError(f"incomplete assignment, missing {missing[:5]}{'...' if len(missing) > 5 else ''}")
    for k, v in assignment.items():
        if v not in (0, 1):
            raise FormulationError(f"binary {k} must be 0 or 1, got {v}")

    new_vars = [replace(v) for v in f.variables if v.name not in assignment]
    vmap = {v.name: v for v in new_vars}
    rows: list[Constraint] = []
    for c in f.constraints:
        rhs = c.rhs
        coeffs = []
        for v, a in c.coeffs:
            if v in assignment:
                rhs -= a * assignment[v]
            else:
                coeffs.append((v, a))
        if not coeffs:
            ok = (c.sense == "<=" and 0 <= rhs + 1e-9) or (c.sense == ">=" and 0 >= rhs - 1e-9) or (
                c.sense == "==" and abs(rhs) <= 1e-9
            )
            if not ok:
                kind = "exclusivity" if c.tag in EXCLUSIVITY_TAGS else "infeasible"
                raise FormulationError(f"{kind}: assignment violates a {c.tag} row")
            continue
        if len(coeffs) == 1 and not vmap[coeffs[0][0]].binary:
            v, a = coeffs[0]
            var = vmap[v]
            bound = rhs / a
            sense = c.sense if a > 0 else {"<=": ">=", ">=": "<=", "==": "=="}[c.sense]
            if sense in ("<=", "==") and bound < var.ub:
                var.ub = bound
                var.tag = var.tag or c.tag
            if sense in (">=", "==") and bound > var.lb:
                var.lb = bound
                var.tag = var.tag or c.tag
            if var.lb > var.ub + 1e-9:
                raise FormulationError(f"infeasible: bounds of {v} crossed by {c.tag}")
            var.ub = max(var.ub, var.lb)
            continue
        rows.append(Constraint(tuple(coeffs), c.sense, rhs, c.tag))

    rows = _merge_opposite(rows)
    g = Formulation(
        new_vars, rows, dict(f.objective), f.objective_constant, list(f.bilinear), f.net,
        f.config, dict(f.limits), dict(f.meta),
    )
    g.meta["fixed"] = {**f.meta.get("fixed", {}), **dict(assignment)}
    # tighten the angle-difference box of VID lines now known to be closed
    terms = []
    for t in g.bilinear:
        if g.meta["fixed"].get(f"h_l[{t.line_id}]") == 1:
            l = f.net.line(t.line_id)
            r = f.config.vid_range
            yb = delta_bounds(f.config, l.susceptance_nominal, r, f.limits[l.id], True)
            yb = (max(yb[0], t.y_bounds[0]), min(yb[1], t.y_bounds[1]))
            t = replace(t, y_bounds=yb)
            w = g.var(t.aux_var)
            corners = [t.x_bounds[i] * yb[j] for i in (0, 1) for j in (0, 1)]
            w.lb, w.ub = max(w.lb, min(corners)), min(w.ub, max(corners))
        terms.append(t)
    g.bilinear = terms
    return g


def _merge_opposite(rows: list[Constraint]) -> list[Constraint]:
    out: list[Constraint] = []
    pending: dict[tuple, int] = {}
    for c in rows:
        if c.sense == "==":
            out.append(c)
            continue
        key = (c.coeffs, round(c.rhs, 12))
        other = "<=" if c.sense == ">=" else ">="
        j = pending.get((key, other))
        if j is not None and out[j] is not None:
            tag = "DC" if c.tag == "Pf_NTO" else c.tag
            out[j] = Constraint(c.coeffs, "==", c.rhs, tag)
            del pending[(key, other)]
            continue
        pending[(key, c.sense)] = len(out)
        out.append(c)
    return out


# ---------------------------------------------------------------------------
# solution extraction
# ---------------------------------------------------------------------------
@dataclass
class SolutionPoint:
    values: dict[str, float]
    objective_total: float
    cost_generation: float
    cost_generation_pwl: float
    cost_load_shedding: float
    flows: dict[int, float]  # MW
    limits: dict[int, float]  # MW
    dispatch: dict[int, float]  # MW per generator
    served: dict[int, float]  # MW per demand
    delta_b: dict[int, float]  # per-unit susceptance deviation
    topology: dict
    violations: list[str]
    hour: int = 0
    # value of the linear model objective (PWL cost + VOLL shedding)
    objective_model: float = float("nan")

    @property
    def pwl_gap(self) -> float:
        return self.cost_generation_pwl - self.cost_generation

    @property
    def shed_mw(self) -> float:
        return self.cost_load_shedding / self._voll if self._voll else 0.0

    _voll: float = 0.0

    def to_dict(self) -> dict:
        return {
            "hour": self.hour,
            "objective_total": self.objective_total,
            "cost_generation": self.cost_generation,
            "cost_generation_pwl": self.cost_generation_pwl,
            "cost_load_shedding": self.cost_load_shedding,
            "objective_model": self.objective_model,
            "flows_mw": {str(k): v for k, v in self.flows.items()},
            "limits_mw": {str(k): v for k, v in self.limits.items()},
            "dispatch_mw": {str(k): v for k, v in self.dispatch.items()},
            "delta_b": {str(k): v for k, v in self.delta_b.items()},
            "topology": self.topology,
            "violations": self.violations,
        }


def _value(f: Formulation, raw: Mapping[str, float], name: str) -> float:
    if name in raw:
        return raw[name]
    fixed = f.meta.get("fixed", {})
    if name in fixed:
        return float(fixed[name])
    return 0.0


def extract_solution(f: Formulation, raw: Mapping[str, float], tol: float = 1e-6) -> SolutionPoint:
    """Turn raw variable values into costs, flows and a topology report.

    Generation cost is re-evaluated on the true quadratic; the PWL surrogate
    value is kept alongside. Constraint violations (including the flow law
    with the exact ``db * delta`` product on closed lines) are listed, not
    raised.
    """
    net, cfg, base = f.net, f.config, f.net.base_mva
    missing = [v.name for v in f.variables if v.name not in raw]
    if missing:
        raise FormulationError(f"raw values missing {missing[:5]}")
    vals = {k: float(v) for k, v in raw.items()}
    full = dict(vals)
    for k, v in f.meta.get("fixed", {}).items():
        full.setdefault(k, float(v))

    dispatch = {}
    c_gen = 0.0
    for g in net.generators:
        p = (full[f"P_g[{g.id},1]"] + full[f"P_g[{g.id},2]"]) * base
        dispatch[g.id] = p
        c_gen += g.cost(p)
    c_pwl = f.objective_constant - cfg.voll * sum(d.p_max for d in net.demands)
    c_pwl += sum(c * full[v] for v, c in f.objective.items() if not v.startswith("P_d["))
    served = {}
    shed = 0.0
    for d in net.demands:
        s = (full[f"P_d[{d.id},1]"] + full[f"P_d[{d.id},2]"]) * base
        served[d.id] = s
        shed += max(d.p_max - s, 0.0)
    c_ls = cfg.voll * shed
    flows = {l.id: full[f"P_l[{l.id}]"] * base for l in net.lines}
    limits = {l.id: f.limits[l.id] * base for l in net.lines}
    delta_b = {t.line_id: full[t.x_var] for t in f.bilinear}

    violations = []
    for v in f.variables:
        x = full[v.name]
        if x < v.lb - tol or x > v.ub + tol:
            violations.append(f"bound {v.name}={x:.6g} outside [{v.lb:.6g}, {v.ub:.6g}]")
    for c in f.constraints:
        if c.violation(full) > tol:
            violations.append(f"row {c.tag} violated by {c.violation(full):.3g}")
    for t in f.bilinear:
        if _value(f, full, f"h_l[{t.line_id}]") > 0.5:
            l = net.line(t.line_id)
            fr, to = t.y_vars
            delta = full[fr] - full[to]
            resid = (l.susceptance_nominal + full[t.x_var]) * delta - full[f"P_l[{l.id}]"]
            if abs(resid) > tol:
                violations.append(f"flow law of line {l.id} off by {resid:.3g} p.u.")
    for name, x in full.items():
        if name.startswith(BINARY_PREFIXES) and min(abs(x), abs(1 - x)) > tol:
            violations.append(f"binary {name}={x:.6g} not integral")

    topo = topology_report(f, full)
    sol = SolutionPoint(
        values=vals,
        objective_total=c_gen + c_ls,
        cost_generation=c_gen,
        cost_generation_pwl=c_pwl,
        cost_load_shedding=c_ls,
        flows=flows,
        limits=limits,
        dispatch=dispatch,
        served=served,
        delta_b=delta_b,
        topology=topo,
        violations=violations,
        hour=f.meta.get("hour", 0),
        objective_model=f.objective_constant + sum(c * full[v] for v, c in f.objective.items()),
    )
    sol._voll = cfg.voll
    return sol


def topology_report(f: Formulation, full: Mapping[str, float]) -> dict:
    net = f.net
    rnd = lambda name: int(round(_value(f, full, name)))  # noqa: E731
    split = [s.id for s in net.substations if rnd(f"h_b[{s.id}]") == 0 and _uses_busbar2(f, full, s.id)]
    opened = [l.id for l in net.lines if rnd(f"h_l[{l.id}]") == 0]
    on_bb2 = {
        "generators": [g.id for g in net.generators if rnd(f"h_g[{g.id}]") == 1],
        "demands": [d.id for d in net.demands if rnd(f"h_d[{d.id}]") == 1],
        "line_ends": [f"{l.id}:{e}" for l in net.lines for e in ("fr", "to") if rnd(f"h_le[{l.id},{e}]") == 1],
    }
    return {"split_substations": split, "open_lines": opened, "on_busbar2": on_bb2}


def _uses_busbar2(f: Formulation, full, sub: int) -> bool:
    net = f.net
    names = [f"h_g[{g}]" for g in net.generators_at(sub)] + [f"h_d[{d}]" for d in net.demands_at(sub)]
    names += [f"h_le[{l},fr]" for l in net.lines_from(sub)] + [f"h_le[{l},to]" for l in net.lines_to(sub)]
    return any(round(_value(f, full, n)) == 1 for n in names)

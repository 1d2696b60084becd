"""Independent reference solvers used by the test-suite.

Everything here is built straight from a :class:`~gridgets.network.Network`
with numpy and solved by GLPK through cvxopt, so none of it shares code with
the formulation, the LP engine or the branch-and-bound under test.

Generation cost is the 8-segment secant interpolant of the quadratic cost,
written as an epigraph (max of secant lines), and unserved load costs VOLL.
"""

from __future__ import annotations

import itertools

import numpy as np
from cvxopt import matrix, solvers

solvers.options["glpk"] = {"msg_lev": "GLP_MSG_OFF"}
solvers.options["show_progress"] = False


class _LP:
    """Tiny row-builder around ``cvxopt.solvers.lp`` with the GLPK backend."""

    def __init__(self):
        self.names: dict[str, int] = {}
        self.c: list[float] = []
        self.G: list[dict[int, float]] = []
        self.h: list[float] = []
        self.A: list[dict[int, float]] = []
        self.b: list[float] = []

    def var(self, name, lb=None, ub=None, cost=0.0):
        j = len(self.c)
        self.names[name] = j
        self.c.append(cost)
        if lb is not None:
            self.le({name: -1.0}, -lb)
        if ub is not None:
            self.le({name: 1.0}, ub)
        return name

    def le(self, coeffs, rhs):
        self.G.append({self.names[k]: v for k, v in coeffs.items()})
        self.h.append(rhs)

    def eq(self, coeffs, rhs):
        self.A.append({self.names[k]: v for k, v in coeffs.items()})
        self.b.append(rhs)

    @staticmethod
    def _dense(rows, n):
        m = np.zeros((len(rows), n))
        for i, r in enumerate(rows):
            for j, v in r.items():
                m[i, j] += v
        return m

    def solve(self):
        """Optimal objective and primal vector, or ``None`` if infeasible."""
        n = len(self.c)
        args = [matrix(np.array(self.c, float)), matrix(self._dense(self.G, n)), matrix(np.array(self.h, float))]
        if self.A:
            args += [matrix(self._dense(self.A, n)), matrix(np.array(self.b, float))]
        sol = solvers.lp(*args, solver="glpk")
        if sol["status"] != "optimal":
            return None
        x = np.array(sol["x"]).ravel()
        return float(np.dot(self.c, x)), x


def _secant_rows(g, segments):
    """(slope, intercept) of each secant line of the generator cost, in MW and $/h."""
    rows = []
    width = (g.p_max - g.p_min) / segments
    for k in range(segments):
        a = g.p_min + k * width
        slope = (g.cost(a + width) - g.cost(a)) / width if width > 0 else 0.0
        rows.append((slope, g.cost(a) - slope * a))
    return rows


def _gen_and_load(lp, net, voll, segments):
    """Dispatch variables with epigraph cost; returns the objective constant."""
    const = 0.0
    for g in net.generators:
        lp.var(f"p{g.id}", g.p_min, g.p_max)
        lp.var(f"t{g.id}", cost=1.0)
        for slope, icpt in _secant_rows(g, segments):
            lp.le({f"t{g.id}": -1.0, f"p{g.id}": slope}, -icpt)
    for d in net.demands:
        lp.var(f"s{d.id}", 0.0, d.p_max, cost=-voll)
        const += voll * d.p_max
    return const


# ---------------------------------------------------------------------------
# plain DC-OPF from power transfer distribution factors
# ---------------------------------------------------------------------------
def ptdf_matrix(net):
    """Line flow (MW) per unit injection (MW) at each substation, slack at the reference."""
    ids = [s.id for s in net.substations]
    pos = {s: i for i, s in enumerate(ids)}
    n, m = len(ids), len(net.lines)
    A = np.zeros((m, n))
    b = np.zeros(m)
    for k, l in enumerate(net.lines):
        A[k, pos[l.from_sub]] = 1.0
        A[k, pos[l.to_sub]] = -1.0
        b[k] = l.susceptance_nominal
    B = A.T @ (b[:, None] * A)
    keep = [i for i, s in enumerate(ids) if s != net.reference.id]
    theta = np.zeros((n, n))
    theta[np.ix_(keep, keep)] = np.linalg.inv(B[np.ix_(keep, keep)])
    return (b[:, None] * A) @ theta, pos


def dc_opf(net, limits_mw, voll=2000.0, segments=8):
    """Merged-busbar DC optimal power flow; returns ($/h objective, flows by line id)."""
    ptdf, pos = ptdf_matrix(net)
    lp = _LP()
    const = _gen_and_load(lp, net, voll, segments)
    lp.eq({**{f"p{g.id}": 1.0 for g in net.generators}, **{f"s{d.id}": -1.0 for d in net.demands}}, 0.0)
    for k, l in enumerate(net.lines):
        row: dict[str, float] = {}
        for g in net.generators:
            row[f"p{g.id}"] = row.get(f"p{g.id}", 0.0) + ptdf[k, pos[g.substation]]
        for d in net.demands:
            row[f"s{d.id}"] = row.get(f"s{d.id}", 0.0) - ptdf[k, pos[d.substation]]
        lp.le(row, limits_mw[l.id])
        lp.le({v: -c for v, c in row.items()}, limits_mw[l.id])
    res = lp.solve()
    if res is None:
        return None
    obj, x = res
    inj = np.zeros(len(pos))
    for g in net.generators:
        inj[pos[g.substation]] += x[lp.names[f"p{g.id}"]]
    for d in net.demands:
        inj[pos[d.substation]] -= x[lp.names[f"s{d.id}"]]
    flows = {l.id: float(ptdf[k] @ inj) for k, l in enumerate(net.lines)}
    return obj + const, flows


# ---------------------------------------------------------------------------
# substation topology enumeration
# ---------------------------------------------------------------------------
def _node(sub, on_b2):
    return f"th{sub}_{2 if on_b2 else 1}"


def topology_lp(net, topo, theta_max, voll=2000.0, segments=8, vid_range=0.0, signs=None, susceptance=None):
    """Bus-level LP for one complete topology.

    ``topo`` maps the binary names ``h_b[s]``, ``h_g[g]``, ``h_d[d]``,
    ``h_l[l]``, ``h_le[l,fr|to]`` to 0/1 (``h_b = 1``: busbars merged).
    VID lines use the exact cone ``(1 - r) b |delta| <= |P| <= (1 + r) b |delta|``
    restricted to the orthant ``signs[line] * delta >= 0``. ``susceptance``
    overrides the nominal value per line (used by the grid oracle).
    Returns the objective in $/h or ``None`` when infeasible.
    """
    signs = signs or {}
    susceptance = susceptance or {}
    lp = _LP()
    for s in net.substations:
        for k in (1, 2):
            lp.var(f"th{s.id}_{k}", -theta_max, theta_max)
        if topo[f"h_b[{s.id}]"]:
            lp.eq({f"th{s.id}_1": 1.0, f"th{s.id}_2": -1.0}, 0.0)
    lp.eq({f"th{net.reference.id}_1": 1.0}, 0.0)
    const = _gen_and_load(lp, net, voll, segments)
    balance = {f"th{s.id}_{k}": {} for s in net.substations for k in (1, 2)}
    for g in net.generators:
        balance[_node(g.substation, topo[f"h_g[{g.id}]"])][f"p{g.id}"] = 1.0
    for d in net.demands:
        balance[_node(d.substation, topo[f"h_d[{d.id}]"])][f"s{d.id}"] = -1.0
    for l in net.lines:
        if not topo[f"h_l[{l.id}]"]:
            continue
        p = lp.var(f"f{l.id}", -l.p_max_static, l.p_max_static)
        nf = _node(l.from_sub, topo[f"h_le[{l.id},fr]"])
        nt = _node(l.to_sub, topo[f"h_le[{l.id},to]"])
        balance[nf][p] = balance[nf].get(p, 0.0) - 1.0
        balance[nt][p] = balance[nt].get(p, 0.0) + 1.0
        b = susceptance.get(l.id, l.susceptance_nominal) * net.base_mva  # MW per rad
        if l.vid_equipped and vid_range > 0:
            sg = signs.get(l.id, 1)
            lo, hi = (1 - vid_range) * b, (1 + vid_range) * b
            # sg*delta >= 0, lo*sg*delta <= sg*P <= hi*sg*delta
            lp.le({nf: -sg, nt: sg}, 0.0)
            lp.le({p: -sg, nf: lo * sg, nt: -lo * sg}, 0.0)
            lp.le({p: sg, nf: -hi * sg, nt: hi * sg}, 0.0)
        else:
            lp.eq({p: 1.0, nf: -b, nt: b}, 0.0)
    for node, row in balance.items():
        if row:
            lp.eq(row, 0.0)
    res = lp.solve()
    return None if res is None else res[0] + const


def admissible(net, topo):
    """Coupling rules: elements sit on busbar 2 only when the coupler is open; open lines have no end on busbar 2."""
    for g in net.generators:
        if topo[f"h_g[{g.id}]"] and topo[f"h_b[{g.substation}]"]:
            return False
    for d in net.demands:
        if topo[f"h_d[{d.id}]"] and topo[f"h_b[{d.substation}]"]:
            return False
    for l in net.lines:
        for e, sub in (("fr", l.from_sub), ("to", l.to_sub)):
            he = topo[f"h_le[{l.id},{e}]"]
            if he and (topo[f"h_b[{sub}]"] or not topo[f"h_l[{l.id}]"]):
                return False
    return True


def assignments(base, free):
    for bits in itertools.product((0, 1), repeat=len(free)):
        yield {**base, **dict(zip(free, bits))}


def orthant_oracle(net, base, free, theta_max, vid_range, voll=2000.0):
    """Exact optimum: every admissible topology times every flow-sign orthant of the VID lines."""
    vid = [l.id for l in net.lines if l.vid_equipped]
    best = None
    for topo in assignments(base, free):
        if not admissible(net, topo):
            continue
        for sg in itertools.product((1, -1), repeat=len(vid)):
            v = topology_lp(net, topo, theta_max, voll, vid_range=vid_range, signs=dict(zip(vid, sg)))
            if v is not None and (best is None or v < best):
                best = v
    return best


def grid_oracle(net, base, free, theta_max, vid_range, step=0.001, voll=2000.0):
    """Literal enumeration: topologies times a susceptance grid of ``step * |b|`` on every VID line."""
    vid = [l for l in net.lines if l.vid_equipped]
    grids = []
    for l in vid:
        b = l.susceptance_nominal
        n = int(round(vid_range / step))
        grids.append([b + k * step * abs(b) for k in range(-n, n + 1)])
    best = None
    for topo in assignments(base, free):
        if not admissible(net, topo):
            continue
        for bs in itertools.product(*grids):
            v = topology_lp(net, topo, theta_max, voll, susceptance={l.id: x for l, x in zip(vid, bs)})
            if v is not None and (best is None or v < best):
                best = v
    return best

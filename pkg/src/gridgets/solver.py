"""Branch-and-bound over topology binaries with spatial branching on VID boxes.

Each node is an LP: binaries relaxed to [0, 1] except the node's fixings,
and every ``w = db * delta`` product replaced by its McCormick envelope over
the node's ``db`` box. Integral nodes whose envelopes are still loose get a
repair solve with ``db`` collapsed to a point (the envelope is then exact),
which yields a feasible incumbent.

Search is best-first on the LP bound, with a depth-first plunge every
``plunge_every`` nodes (including the root) to find incumbents early.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .formulation import Formulation, SolutionPoint, extract_solution
from .lp import ERROR, INFEASIBLE, OPTIMAL, HighsEngine, LPEngine
from .relax import clamp_split

log = logging.getLogger(__name__)

STATUSES = ("optimal_within_gap", "infeasible", "time_limit", "node_limit")


@dataclass(frozen=True)
class SolverConfig:
    rel_gap_target: float = 0.005
    time_limit: float | None = None
    node_limit: int | None = None
    branching_rule: str = "most_fractional"
    spatial_rule: str = "max_violation"
    feasibility_tol: float = 1e-7
    integer_tol: float = 1e-6
    bilinear_tol: float = 1e-4  # per-unit on w
    plunge_every: int = 20
    # improvement moves (one or two binary flips) tried around the first incumbent
    local_search_moves: int = 20000
    log_every: int = 200
    debug: bool = False

    def __post_init__(self):
        if not self.rel_gap_target > 0:
            raise ValueError("rel_gap_target must be positive")
        if not (self.feasibility_tol > 0 and self.integer_tol > 0 and self.bilinear_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.branching_rule not in ("most_fractional", "pseudo_cost"):
            raise ValueError(f"unknown branching rule {self.branching_rule!r}")
        if self.spatial_rule != "max_violation":
            raise ValueError(f"unknown spatial rule {self.spatial_rule!r}")


@dataclass
class NodeState:
    fixings: dict[int, int]  # column index -> 0/1
    boxes: tuple  # per bilinear term: ((db_lo, db_hi), (delta_lo, delta_hi))
    bound: float = -math.inf  # parent's LP bound until solved
    depth: int = 0
    id: int = 0
    basis: object = None
    branched: tuple | None = None  # (kind, index, direction, parent value)


@dataclass
class SolveResult:
    status: str
    incumbent: SolutionPoint | None
    incumbent_objective: float
    best_bound: float
    rel_gap: float
    nodes_explored: int
    wall_time: float
    monotonicity_violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        fin = lambda v: v if math.isfinite(v) else None  # noqa: E731
        return {
            "status": self.status,
            "incumbent_objective": fin(self.incumbent_objective),
            "best_bound": fin(self.best_bound),
            "rel_gap": fin(self.rel_gap),
            "nodes_explored": self.nodes_explored,
            "wall_time": self.wall_time,
            "incumbent": self.incumbent.to_dict() if self.incumbent else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def relative_gap(incumbent: float, bound: float, eps: float = 1e-9) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(0.0, (incumbent - bound) / max(abs(incumbent), eps))


class _Tree:
    """LP engine plus the per-node column bounds of one formulation."""

    def __init__(self, f: Formulation, cfg: SolverConfig, engine: LPEngine | None = None):
        self.f = f
        self.cfg = cfg
        self.engine = engine or HighsEngine(cfg.feasibility_tol)
        self.engine.load(f)
        self.lb0 = np.array([v.lb for v in f.variables], dtype=float)
        self.ub0 = np.array([v.ub for v in f.variables], dtype=float)
        self.bin_idx = np.array([i for i, v in enumerate(f.variables) if v.binary], dtype=int)
        self.terms = list(f.bilinear)
        self.x_idx = [f.index(t.x_var) for t in self.terms]
        self.w_idx = [f.index(t.aux_var) for t in self.terms]
        self.y_idx = [(f.index(t.y_vars[0]), f.index(t.y_vars[1])) for t in self.terms]

    def root(self) -> NodeState:
        return NodeState({}, tuple((t.x_bounds, t.y_bounds) for t in self.terms))

    def solve(self, node: NodeState, basis=None):
        lb, ub = self.lb0.copy(), self.ub0.copy()
        for i, v in node.fixings.items():
            lb[i] = ub[i] = v
        for k, (xb, _) in enumerate(node.boxes):
            lb[self.x_idx[k]], ub[self.x_idx[k]] = xb
        self.engine.set_bounds(lb, ub)
        self.engine.set_terms([replace(t, x_bounds=xb, y_bounds=yb) for t, (xb, yb) in zip(self.terms, node.boxes)])
        res = self.engine.solve(basis)
        if res.status == ERROR:
            log.warning("numerical failure at node %d, re-solving with tight tolerances", node.id)
            res = self.engine.solve(None, tight=True)
        return res

    def fractional(self, x) -> np.ndarray:
        if not self.bin_idx.size:
            return self.bin_idx
        v = x[self.bin_idx]
        frac = np.minimum(v - np.floor(v), np.ceil(v) - v)
        return self.bin_idx[frac > self.cfg.integer_tol]

    def delta(self, x, k) -> float:
        fr, to = self.y_idx[k]
        return float(x[fr] - x[to])

    def violations(self, x, boxes) -> np.ndarray:
        """Distance of each ``w`` from ``{db * delta : db in the node's db box}``.

        This is the envelope violation minimized over ``db``: a zero entry
        means some ``db`` in the box reproduces ``w`` exactly (see
        :meth:`exact_point`), whatever ``db`` value the LP happened to report.
        """
        out = np.zeros(len(self.terms))
        for k, ((xl, xu), _) in enumerate(boxes):
            y = self.delta(x, k)
            lo, hi = min(xl * y, xu * y), max(xl * y, xu * y)
            w = x[self.w_idx[k]]
            out[k] = max(lo - w, w - hi, 0.0)
        return out

    def exact_db(self, x, k, box) -> float:
        """The ``db`` in ``box`` that best reproduces ``w`` at the point's ``delta``."""
        y = self.delta(x, k)
        if abs(y) <= 1e-12:
            return float(min(max(x[self.x_idx[k]], box[0]), box[1]))
        return float(min(max(x[self.w_idx[k]] / y, box[0]), box[1]))

    def exact_point(self, x, boxes) -> np.ndarray:
        x = x.copy()
        for k, (xb, _) in enumerate(boxes):
            x[self.x_idx[k]] = self.exact_db(x, k, xb)
        return x


def solve_relaxation(f: Formulation, node: NodeState | None = None, cfg: SolverConfig = SolverConfig()):
    """LP bound and point of one node, or ``None`` when the node is infeasible."""
    tree = _Tree(f, cfg)
    res = tree.solve(node or tree.root())
    if res.status != OPTIMAL:
        return None
    return res.objective, res.x


def branch(f: Formulation, node: NodeState, x, cfg: SolverConfig = SolverConfig(), pseudo=None) -> list[NodeState]:
    """Children of ``node`` at LP point ``x``.

    Binary branching on the most fractional variable first (ties: lowest
    column index). Otherwise the term with the largest violation is split:
    on the sign of ``delta`` while its box straddles zero (each half-box
    relaxes the flow law to its exact cone), else on ``db`` at the current
    value clamped into the middle 60% of the box.
    """
    tree = f if isinstance(f, _Tree) else _Tree(f, cfg)
    frac = tree.fractional(x)
    if frac.size:
        if cfg.branching_rule == "pseudo_cost" and pseudo is not None:
            i = pseudo.select(frac, x)
        else:
            v = x[frac]
            score = np.minimum(v - np.floor(v), np.ceil(v) - v)
            i = int(frac[np.argmax(score)])  # argmax keeps the first (lowest index) tie
        kids = []
        for val in (0, 1):
            fx = dict(node.fixings)
            fx[i] = val
            kids.append(NodeState(fx, node.boxes, node.bound, node.depth + 1, branched=("bin", i, val, float(x[i]))))
        return kids
    viol = tree.violations(x, node.boxes)
    if not viol.size or viol.max() <= cfg.bilinear_tol * 1e-3:
        raise ValueError("branch called on a point that needs no branching")
    k = int(np.argmax(viol))
    xb, yb = node.boxes[k]
    if yb[0] < 0.0 < yb[1]:
        halves = [(xb, (yb[0], 0.0)), (xb, (0.0, yb[1]))]
    else:
        at = clamp_split(xb[0], xb[1], float(x[tree.x_idx[k]]))
        halves = [((xb[0], at), yb), ((at, xb[1]), yb)]
    kids = []
    for box in halves:
        boxes = list(node.boxes)
        boxes[k] = box
        kids.append(NodeState(dict(node.fixings), tuple(boxes), node.bound, node.depth + 1, branched=("box", k)))
    return kids


class _PseudoCosts:
    def __init__(self):
        self.sum = {}  # (i, dir) -> (total gain per unit, count)

    def update(self, i, direction, frac, gain):
        if frac <= 0:
            return
        s, n = self.sum.get((i, direction), (0.0, 0))
        self.sum[(i, direction)] = (s + gain / frac, n + 1)

    def _avg(self, i, d, default):
        s, n = self.sum.get((i, d), (0.0, 0))
        return s / n if n else default

    def select(self, frac_idx, x):
        known = [s / n for (s, n) in self.sum.values() if n]
        default = float(np.mean(known)) if known else 1.0
        best, best_score = None, -1.0
        for i in frac_idx:
            f = x[i] - math.floor(x[i])
            down = self._avg(i, 0, default) * f
            up = self._avg(i, 1, default) * (1 - f)
            score = max(down, 1e-9) * max(up, 1e-9)
            if score > best_score + 1e-15:
                best, best_score = int(i), score
        return best


class _FlipSearch:
    """First-improvement search over one- and two-binary flips.

    Rows whose variables are all binary (exclusivity and line-status
    couplings) are kept satisfied by propagation: a flip that violates such a
    row also flips the row's other variable. Pairs are binaries at distance
    at most two in the row-sharing graph, e.g. two elements of one
    substation or both ends of one line. Moves are ordered by how far the
    root relaxation pulls each variable from the current assignment.
    """

    def __init__(self, tree: _Tree):
        self.tree = tree
        f = tree.f
        bins = {int(i) for i in tree.bin_idx}
        self.rows = []
        for c in f.constraints:
            idx = [(f.index(v), a) for v, a in c.coeffs]
            if all(i in bins for i, _ in idx):
                self.rows.append((idx, c.sense, c.rhs))
        self.by_var: dict[int, list] = {i: [] for i in bins}
        nbr: dict[int, set] = {i: set() for i in bins}
        for r in self.rows:
            ids = [i for i, _ in r[0]]
            for i in ids:
                self.by_var[i].append(r)
                nbr[i] |= set(ids) - {i}
        pairs = set()
        for i in bins:
            for k in nbr[i]:
                pairs.update((min(i, j), max(i, j)) for j in nbr[k] | {k} if j != i)
        self.moves = [(i,) for i in sorted(bins)] + sorted(pairs)

    @staticmethod
    def _ok(row, a):
        s = sum(c * a[i] for i, c in row[0])
        if row[1] == "<=":
            return s <= row[2] + 1e-9
        if row[1] == ">=":
            return s >= row[2] - 1e-9
        return abs(s - row[2]) <= 1e-9

    def flip(self, a: dict, i: int) -> dict | None:
        a = dict(a)
        a[i] = 1 - a[i]
        queue, seen = [i], {i}
        while queue:
            j = queue.pop()
            for row in self.by_var[j]:
                if self._ok(row, a):
                    continue
                for k, _ in row[0]:
                    if k in seen:
                        continue
                    a[k] = 1 - a[k]
                    if self._ok(row, a):
                        seen.add(k)
                        queue.append(k)
                        break
                    a[k] = 1 - a[k]
                else:
                    return None
        return a

    def apply(self, a: dict, move) -> dict | None:
        b = self.flip(a, move[0])
        if b is None or len(move) == 1:
            return b
        if b[move[1]] != a[move[1]]:
            return None  # already flipped by propagation
        return self.flip(b, move[1])

    def improve(self, start: dict, start_obj: float, guide, evaluate, budget: int, stop_below: float):
        """Return (assignment, objective, result, moves used)."""
        cur, best, best_res, used = start, start_obj, None, 0
        improved = True
        while improved and used < budget and best > stop_below:
            improved = False
            order = sorted(self.moves, key=lambda m: (-sum(abs(guide[i] - cur[i]) for i in m) / len(m), m))
            for m in order:
                if used >= budget:
                    break
                a = self.apply(cur, m)
                if a is None:
                    continue
                used += 1
                res = evaluate(a)
                if res is not None and res.objective < best - 1e-9 * max(1.0, abs(best)):
                    cur, best, best_res, improved = a, res.objective, res, True
                    break
        return cur, best, best_res, used


def run(f: Formulation, cfg: SolverConfig = SolverConfig(), hint: Mapping[str, int] | None = None,
        engine: LPEngine | None = None) -> SolveResult:
    """Solve ``f`` to ``cfg.rel_gap_target``.

    ``hint`` is an optional complete binary assignment tried as a first
    incumbent (for example the nominal topology), with every ``db`` at 0.
    Without binaries the all-zero ``db`` point is always tried first, so a
    result is never worse than the same network without VID.
    """
    t0 = time.perf_counter()
    tree = _Tree(f, cfg, engine)
    pseudo = _PseudoCosts() if cfg.branching_rule == "pseudo_cost" else None
    inc_obj, inc_x = math.inf, None
    floor = math.inf  # least bound among nodes fathomed without a proof against the incumbent
    heap: list = []
    mono = []
    counter = 0
    explored = 0
    tiny = cfg.bilinear_tol * 1e-3

    def target(obj):
        return cfg.rel_gap_target * max(abs(obj), 1e-9) if math.isfinite(obj) else 0.0

    warm = [None]

    def repair(fixings_x, x=None):
        """Fix binaries, collapse db boxes to a point and solve the exact LP."""
        fx = {int(i): int(round(v)) for i, v in fixings_x.items()}
        boxes = []
        for k, t in enumerate(tree.terms):
            v = 0.0 if x is None else tree.exact_db(x, k, t.x_bounds)
            boxes.append(((v, v), t.y_bounds))
        res = tree.solve(NodeState(fx, tuple(boxes)), warm[0])
        if res.status != OPTIMAL:
            return None
        warm[0] = res.basis
        return res

    def offer(res):
        nonlocal inc_obj, inc_x
        if res is None:
            return
        if not math.isfinite(inc_obj) or res.objective < inc_obj - 1e-12 * max(1.0, abs(inc_obj)):
            inc_obj, inc_x = res.objective, res.x

    if hint:
        missing = [v.name for v in f.binaries if v.name not in hint]
        if missing:
            raise ValueError(f"hint is missing binaries {missing[:3]}")
        offer(repair({f.index(k): v for k, v in hint.items() if f.has_var(k) and f.var(k).binary}))
    elif not tree.bin_idx.size and tree.terms:
        offer(repair({}))  # every device at its nominal susceptance

    root = tree.root()
    heapq.heappush(heap, (-math.inf, 0, root))
    status = None
    dive: list[NodeState] = []
    root_x, root_bound = None, -math.inf
    searched = not (cfg.local_search_moves > 0 and tree.bin_idx.size)

    while heap or dive:
        if not searched and not dive and root_x is not None and inc_x is not None:
            searched = True
            ls = _FlipSearch(tree)
            start = {int(i): int(round(inc_x[i])) for i in tree.bin_idx}
            x0 = inc_x
            stop = root_bound + 0.2 * target(inc_obj)
            _, _, res_ls, used = ls.improve(start, inc_obj, root_x, lambda a: repair(a, x0), cfg.local_search_moves, stop)
            offer(res_ls)
            log.info("flip search: %d moves, incumbent %.6f", used, inc_obj)
        if cfg.time_limit is not None and time.perf_counter() - t0 > cfg.time_limit:
            status = "time_limit"
            break
        if cfg.node_limit is not None and explored >= cfg.node_limit:
            status = "node_limit"
            break
        if dive:
            node = dive.pop()
        else:
            bound, _, node = heapq.heappop(heap)
            if bound >= inc_obj - target(inc_obj) * 1e-6:
                continue
            open_min = min(bound, heap[0][0]) if heap else bound
            if relative_gap(inc_obj, min(open_min, floor)) <= cfg.rel_gap_target:
                heapq.heappush(heap, (bound, _, node))
                status = "optimal_within_gap"
                break
        plunging = bool(dive) or explored % cfg.plunge_every == 0
        explored += 1
        node.id = explored
        res = tree.solve(node, node.basis)
        if explored == 1 and res.status == OPTIMAL:
            root_x, root_bound = res.x, res.objective
        if res.status == INFEASIBLE:
            dive.clear()
            continue
        if res.status != OPTIMAL:
            # unresolved: keep the parent's bound as a conservative floor
            floor = min(floor, node.bound)
            dive.clear()
            continue
        if cfg.debug and res.objective < node.bound - 1e-7 * max(1.0, abs(node.bound)):
            mono.append((node.id, node.bound, res.objective))
        if pseudo is not None and node.branched and node.branched[0] == "bin":
            _, i, d, pv = node.branched
            pseudo.update(i, d, abs(d - pv), res.objective - node.bound)
        node.bound = max(res.objective, node.bound) if math.isfinite(node.bound) else res.objective
        if node.bound >= inc_obj - target(inc_obj) * 1e-6:
            dive.clear()
            continue
        x = res.x
        frac = tree.fractional(x)
        if not frac.size:
            viol = tree.violations(x, node.boxes)
            if not viol.size or viol.max() <= tiny:
                res.x = tree.exact_point(x, node.boxes)
                offer(res)
                floor = min(floor, node.bound) if res.objective > node.bound else floor
                dive.clear()
                continue
            fixed = {int(i): x[i] for i in tree.bin_idx}
            rep = repair(fixed, x)
            offer(rep)
            if viol.max() <= cfg.bilinear_tol and (rep is None or rep.objective - node.bound <= 0.5 * target(rep.objective)):
                floor = min(floor, node.bound)
                dive.clear()
                continue
        kids = branch(tree, node, x, cfg, pseudo)
        for kid in kids:
            kid.basis = res.basis
        if plunging:
            if kids[0].branched[0] == "bin":
                first = 1 if x[kids[0].branched[1]] >= 0.5 else 0
            else:
                first = 0
            dive.append(kids[first])
            other = kids[1 - first]
            counter += 1
            heapq.heappush(heap, (other.bound, counter, other))
        else:
            for kid in kids:
                counter += 1
                heapq.heappush(heap, (kid.bound, counter, kid))
        if cfg.log_every and explored % cfg.log_every == 0:
            open_min = heap[0][0] if heap else math.inf
            bb = min(open_min, floor, inc_obj)
            log.info("nodes=%d open=%d bound=%.6f incumbent=%.6f gap=%.4f%%", explored, len(heap), bb, inc_obj,
                     100 * relative_gap(inc_obj, bb))

    open_min = min([b for b, _, _ in heap] + [n.bound for n in dive], default=math.inf)
    best_bound = min(open_min, floor, inc_obj)
    if status is None:
        if inc_x is None:
            # infeasibility is only proven when no node was left unresolved
            status = "infeasible" if floor == math.inf else "node_limit"
        else:
            status = "optimal_within_gap"
    gap = relative_gap(inc_obj, best_bound)
    if status == "optimal_within_gap" and gap > cfg.rel_gap_target:
        # exhausted the tree but unresolved nodes keep the bound loose
        status = "node_limit"
    inc = None
    if inc_x is not None:
        inc = extract_solution(f, dict(zip((v.name for v in f.variables), inc_x)), tol=1e-6)
    if status == "infeasible":
        best_bound = math.inf
    res = SolveResult(status, inc, inc_obj, best_bound, gap, explored, time.perf_counter() - t0, mono)
    log.debug("finished %s after %d nodes, gap %.4g", status, explored, gap)
    return res

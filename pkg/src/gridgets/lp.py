"""LP relaxation engine interface and its HiGHS-backed implementation.

The branch-and-bound driver only talks to :class:`LPEngine`: load a
formulation once, then per node set column bounds and McCormick boxes,
solve (optionally from a parent basis) and read back values.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .formulation import Formulation
from .relax import BilinearTerm, mccormick_envelope

OPTIMAL, INFEASIBLE, ERROR = "optimal", "infeasible", "error"


@dataclass
class LPResult:
    status: str
    objective: float = float("nan")  # includes the objective constant
    x: np.ndarray | None = None
    basis: Any = None


class LPEngine(abc.ABC):
    """Column order follows ``Formulation.variables``."""

    @abc.abstractmethod
    def load(self, f: Formulation) -> None: ...

    @abc.abstractmethod
    def set_bounds(self, lb: np.ndarray, ub: np.ndarray) -> None: ...

    @abc.abstractmethod
    def set_terms(self, terms: Sequence[BilinearTerm]) -> None: ...

    @abc.abstractmethod
    def solve(self, basis: Any = None, tight: bool = False) -> LPResult: ...


class HighsEngine(LPEngine):
    def __init__(self, feasibility_tol: float = 1e-7):
        import highspy

        self._hs = highspy
        self.tol = feasibility_tol
        self.h = None

    def load(self, f: Formulation) -> None:
        hs = self._hs
        inf = hs.kHighsInf
        n = len(f.variables)
        rows = f.all_constraints()
        self.n_base_rows = len(f.constraints)
        ri, ci, vals = [], [], []
        lo = np.empty(len(rows))
        hi = np.empty(len(rows))
        for i, c in enumerate(rows):
            for v, a in c.coeffs:
                ri.append(i)
                ci.append(f.index(v))
                vals.append(a)
            lo[i] = c.rhs if c.sense in (">=", "==") else -inf
            hi[i] = c.rhs if c.sense in ("<=", "==") else inf
        order = np.lexsort((np.array(ri), np.array(ci))) if ri else np.array([], dtype=int)
        ci_s = np.asarray(ci, dtype=np.int32)[order]
        start = np.searchsorted(ci_s, np.arange(n + 1)).astype(np.int32)

        lp = hs.HighsLp()
        lp.num_col_ = n
        lp.num_row_ = len(rows)
        lp.col_cost_ = np.array([f.objective.get(v.name, 0.0) for v in f.variables])
        lp.col_lower_ = np.array([v.lb for v in f.variables], dtype=float)
        lp.col_upper_ = np.array([v.ub for v in f.variables], dtype=float)
        lp.row_lower_ = lo
        lp.row_upper_ = hi
        lp.offset_ = f.objective_constant
        lp.a_matrix_.format_ = hs.MatrixFormat.kColwise
        lp.a_matrix_.start_ = start
        lp.a_matrix_.index_ = np.asarray(ri, dtype=np.int32)[order]
        lp.a_matrix_.value_ = np.asarray(vals, dtype=float)[order]
        lp.a_matrix_.num_col_ = n
        lp.a_matrix_.num_row_ = len(rows)

        h = hs.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("primal_feasibility_tolerance", self.tol)
        h.setOptionValue("dual_feasibility_tolerance", self.tol)
        h.passModel(lp)
        self.h = h
        self.lb = np.array([v.lb for v in f.variables], dtype=float)
        self.ub = np.array([v.ub for v in f.variables], dtype=float)
        self.terms = list(f.bilinear)
        self.cols = [(f.index(t.aux_var), f.index(t.x_var), f.index(t.y_vars[0]), f.index(t.y_vars[1])) for t in f.bilinear]

    def set_bounds(self, lb, ub) -> None:
        diff = np.flatnonzero((lb != self.lb) | (ub != self.ub))
        if diff.size:
            self.h.changeColsBounds(diff.size, diff.astype(np.int32), lb[diff], ub[diff])
            self.lb[diff] = lb[diff]
            self.ub[diff] = ub[diff]

    def set_terms(self, terms) -> None:
        inf = self._hs.kHighsInf
        for k, t in enumerate(terms):
            old = self.terms[k]
            if old.x_bounds == t.x_bounds and old.y_bounds == t.y_bounds:
                continue
            _, cx, cf, ct = self.cols[k]
            row0 = self.n_base_rows + 6 * k
            for j, r in enumerate(mccormick_envelope(t)):
                self.h.changeCoeff(row0 + j, cx, r.cx)
                self.h.changeCoeff(row0 + j, cf, r.cy)
                self.h.changeCoeff(row0 + j, ct, -r.cy)
                if r.sense == ">=":
                    self.h.changeRowBounds(row0 + j, r.rhs, inf)
                else:
                    self.h.changeRowBounds(row0 + j, -inf, r.rhs)
            self.h.changeRowBounds(row0 + 4, t.y_bounds[0], inf)
            self.h.changeRowBounds(row0 + 5, -inf, t.y_bounds[1])
            self.terms[k] = t

    def solve(self, basis=None, tight=False) -> LPResult:
        hs, h = self._hs, self.h
        if tight:
            h.setOptionValue("primal_feasibility_tolerance", self.tol * 0.01)
            h.setOptionValue("dual_feasibility_tolerance", self.tol * 0.01)
            h.clearSolver()
        elif basis is not None:
            h.setBasis(basis)
        h.run()
        if tight:
            h.setOptionValue("primal_feasibility_tolerance", self.tol)
            h.setOptionValue("dual_feasibility_tolerance", self.tol)
        st = h.getModelStatus()
        if st == hs.HighsModelStatus.kOptimal:
            sol = h.getSolution()
            return LPResult(OPTIMAL, h.getInfo().objective_function_value, np.array(sol.col_value), h.getBasis())
        if st in (hs.HighsModelStatus.kInfeasible, hs.HighsModelStatus.kUnboundedOrInfeasible):
            return LPResult(INFEASIBLE)
        return LPResult(ERROR)


def solve_lp(f: Formulation, lb=None, ub=None, terms=None) -> LPResult:
    """One-shot LP solve of ``f`` with optional bound and box overrides."""
    e = HighsEngine()
    e.load(f)
    if lb is not None:
        e.set_bounds(np.asarray(lb, float), np.asarray(ub, float))
    if terms is not None:
        e.set_terms(terms)
    return e.solve()

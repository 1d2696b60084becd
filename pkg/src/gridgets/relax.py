"""McCormick relaxation of the VID bilinear term ``w = db * delta``.

``db`` is the susceptance deviation of a line and ``delta`` its end-to-end
angle difference. One product per line is enough because the flow law only
uses the difference of the two end angles.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import math


@dataclass(frozen=True)
class BilinearTerm:
    line_id: int
    x_bounds: tuple[float, float]  # susceptance deviation box
    y_bounds: tuple[float, float]  # angle difference box
    aux_var: str = ""
    x_var: str = ""
    y_vars: tuple[str, str] = ("", "")  # delta = y_vars[0] - y_vars[1]

    @property
    def x_width(self) -> float:
        return self.x_bounds[1] - self.x_bounds[0]

    @property
    def y_width(self) -> float:
        return self.y_bounds[1] - self.y_bounds[0]

    def with_x_bounds(self, lo: float, hi: float) -> "BilinearTerm":
        return replace(self, x_bounds=(lo, hi))

    def max_gap(self) -> float:
        """Largest possible |w - x*y| inside the envelope (attained at the box center)."""
        return self.x_width * self.y_width / 4.0


@dataclass(frozen=True)
class EnvelopeRow:
    """``w + cx*x + cy*y  (sense)  rhs``."""

    cx: float
    cy: float
    sense: str
    rhs: float


def mccormick_envelope(t: BilinearTerm) -> tuple[EnvelopeRow, EnvelopeRow, EnvelopeRow, EnvelopeRow]:
    """The four envelope inequalities of ``w = x*y`` over the term's box.

    Two under-estimators from the (lo, lo) and (hi, hi) corners and two
    over-estimators from the mixed corners.
    """
    (xl, xu), (yl, yu) = t.x_bounds, t.y_bounds
    if not all(math.isfinite(v) for v in (xl, xu, yl, yu)):
        raise ValueError(f"McCormick envelope of line {t.line_id} needs finite bounds")
    if xl > xu or yl > yu:
        raise ValueError(f"empty box for line {t.line_id}")
    return (
        EnvelopeRow(-yl, -xl, ">=", -xl * yl),
        EnvelopeRow(-yu, -xu, ">=", -xu * yu),
        EnvelopeRow(-yl, -xu, "<=", -xu * yl),
        EnvelopeRow(-yu, -xl, "<=", -xl * yu),
    )


def envelope_interval(t: BilinearTerm, x: float, y: float) -> tuple[float, float]:
    """Range of ``w`` the envelope admits at ``(x, y)``; empty if lo > hi."""
    lo, hi = -math.inf, math.inf
    for row in mccormick_envelope(t):
        bound = row.rhs - row.cx * x - row.cy * y
        if row.sense == ">=":
            lo = max(lo, bound)
        else:
            hi = min(hi, bound)
    return lo, hi


def envelope_violation(t: BilinearTerm, point: tuple[float, float, float]) -> float:
    """|w - x*y| at ``point = (x, y, w)``."""
    x, y, w = point
    return abs(w - x * y)


def split_term(t: BilinearTerm, on: str, at: float) -> tuple[BilinearTerm, BilinearTerm]:
    """Bisect the ``x`` or ``y`` interval of the box at ``at``."""
    if on not in ("x", "y"):
        raise ValueError("split axis must be 'x' or 'y'")
    lo, hi = t.x_bounds if on == "x" else t.y_bounds
    if not lo < at < hi:
        raise ValueError(f"split point {at} is not strictly inside [{lo}, {hi}]")
    if on == "x":
        return replace(t, x_bounds=(lo, at)), replace(t, x_bounds=(at, hi))
    return replace(t, y_bounds=(lo, at)), replace(t, y_bounds=(at, hi))


def clamp_split(lo: float, hi: float, value: float, keep: float = 0.6) -> float:
    """Clamp a split point into the middle ``keep`` fraction of ``[lo, hi]``."""
    margin = 0.5 * (1.0 - keep) * (hi - lo)
    return min(max(value, lo + margin), hi - margin)
